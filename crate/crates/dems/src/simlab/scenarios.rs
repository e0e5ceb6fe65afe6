//! Built-in simulation scenarios and their default parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::gencoord::LinearPlant;
use crate::noise::NoiseSpec;
use crate::simlab::{simulate_lti, Dataset};

/// Quadrotor roll-axis constants: thrust coefficient over roll inertia.
pub const QUADROTOR_IXX: f64 = 3.4e-3;
pub const QUADROTOR_CB_PHI: f64 = 1.274e-3;

/// Input signal families used by the built-in scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputSignal {
    /// All input channels zero.
    Zero,
    /// `v(t) = exp(-0.25 (t - 12)²)` on channel 0, zeros elsewhere.
    GaussianBump,
    /// Small deterministic sinusoids on the motor channels.
    MotorMix,
}

impl InputSignal {
    pub fn eval(&self, t: f64, channels: usize) -> DVector<f64> {
        let mut v = DVector::zeros(channels);
        match self {
            InputSignal::Zero => {}
            InputSignal::GaussianBump => {
                v[0] = (-0.25 * (t - 12.0) * (t - 12.0)).exp();
            }
            InputSignal::MotorMix => {
                let freqs = [5.0, 7.0, 3.0, 11.0];
                let amps = [0.10, 0.10, 0.05, 0.0];
                for c in 0..channels.min(4) {
                    v[c] = amps[c] * (2.0 * std::f64::consts::PI * t / freqs[c]).sin();
                }
            }
        }
        v
    }

    pub fn name(&self) -> &'static str {
        match self {
            InputSignal::Zero => "zero",
            InputSignal::GaussianBump => "gaussian_bump",
            InputSignal::MotorMix => "motor_mix",
        }
    }
}

/// `v(t) = exp(-0.25 (t-12)²)` as a closure over a single input channel.
pub fn gaussian_bump_input() -> impl Fn(f64) -> DVector<f64> {
    move |t: f64| InputSignal::GaussianBump.eval(t, 1)
}

/// A named plant plus its default experiment parameters.
#[derive(Debug, Clone)]
pub struct Scenario {
    name: String,
    plant: LinearPlant,
    input: InputSignal,
    /// Default sampling step and horizon.
    pub dt: f64,
    pub t_total: f64,
    /// Precisions the observers assume.
    pub obs_prec_w: f64,
    pub obs_prec_z: f64,
    /// Per-channel standard deviations used when generating process noise;
    /// equal to the assumed ones unless the scenario models extra disturbance.
    gen_std_w: DVector<f64>,
    gen_std_z: DVector<f64>,
    /// Default embedding orders.
    pub p: usize,
    pub d: usize,
}

impl Scenario {
    /// The two-state, four-output benchmark system.
    pub fn paper_system() -> Self {
        let e6 = 6.0f64.exp();
        let plant = LinearPlant::new(
            DMatrix::from_row_slice(2, 2, &[0.0484, 0.7535, -0.7617, -0.2187]),
            DMatrix::from_row_slice(2, 1, &[0.3604, 0.0776]),
            DMatrix::from_row_slice(
                4,
                2,
                &[
                    0.2265, -0.4786, 0.4066, -0.2641, 0.3871, 0.3817, -0.1630, -0.9290,
                ],
            ),
        )
        .expect("static plant definition");
        Self {
            name: "paper_system".to_string(),
            plant,
            input: InputSignal::GaussianBump,
            dt: 0.1,
            t_total: 32.0,
            obs_prec_w: e6,
            obs_prec_z: e6,
            gen_std_w: DVector::from_element(2, (-3.0f64).exp()),
            gen_std_z: DVector::from_element(4, (-3.0f64).exp()),
            p: 6,
            d: 2,
        }
    }

    /// Linearized quadrotor roll axis driven by synthetic colored wind.
    ///
    /// The observers assume `Πʷ = e⁴ I₂`, `Πᶻ = e¹⁰`; the generated wind is
    /// stronger than the assumed process noise (a blower, not a breeze) and
    /// acts mostly as roll torque, i.e. on the `φ̇` dynamics.
    pub fn quadrotor() -> Self {
        let k = QUADROTOR_CB_PHI / QUADROTOR_IXX;
        let plant = LinearPlant::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 0.0, 0.0, k, -k, -k, k]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .expect("static plant definition");
        let e2 = (-2.0f64).exp();
        Self {
            name: "quadrotor".to_string(),
            plant,
            input: InputSignal::MotorMix,
            dt: 0.0083,
            t_total: 15.0,
            obs_prec_w: 4.0f64.exp(),
            obs_prec_z: 10.0f64.exp(),
            gen_std_w: DVector::from_vec(vec![3.0 * e2, 10.0 * e2]),
            gen_std_z: DVector::from_element(1, (-5.0f64).exp()),
            p: 2,
            d: 2,
        }
    }

    /// A user-supplied plant with paper-system-style defaults.
    pub fn custom(plant: LinearPlant) -> Self {
        let e6 = 6.0f64.exp();
        let n = plant.state_dim();
        let m = plant.output_dim();
        Self {
            name: "custom".to_string(),
            plant,
            input: InputSignal::GaussianBump,
            dt: 0.1,
            t_total: 32.0,
            obs_prec_w: e6,
            obs_prec_z: e6,
            gen_std_w: DVector::from_element(n, (-3.0f64).exp()),
            gen_std_z: DVector::from_element(m, (-3.0f64).exp()),
            p: 6,
            d: 2,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "paper_system" => Some(Self::paper_system()),
            "quadrotor" => Some(Self::quadrotor()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn plant(&self) -> &LinearPlant {
        &self.plant
    }

    pub fn input(&self) -> InputSignal {
        self.input
    }

    pub fn set_input(&mut self, input: InputSignal) {
        self.input = input;
    }

    /// Precision matrices the generator uses for drawing noise.
    pub fn generation_noise(&self, s_real: f64, seed: u64) -> Result<NoiseSpec> {
        let prec_w = DMatrix::from_diagonal(&self.gen_std_w.map(|sd| 1.0 / (sd * sd)));
        let prec_z = DMatrix::from_diagonal(&self.gen_std_z.map(|sd| 1.0 / (sd * sd)));
        NoiseSpec::new(s_real, prec_w, prec_z, seed)
    }

    /// Isotropic precision matrices the observers assume.
    pub fn observer_precisions(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.plant.state_dim();
        let m = self.plant.output_dim();
        (
            DMatrix::identity(n, n) * self.obs_prec_w,
            DMatrix::identity(m, m) * self.obs_prec_z,
        )
    }

    /// Simulates the scenario with its default horizon and a custom step.
    pub fn simulate(&self, s_real: f64, seed: u64, t_total: f64, dt: f64) -> Result<Dataset> {
        let noise = self.generation_noise(s_real, seed)?;
        let r = self.plant.input_dim();
        let input = self.input;
        let f = move |t: f64| input.eval(t, r);
        simulate_lti(
            &self.plant,
            &f,
            &noise,
            t_total,
            dt,
            &DVector::zeros(self.plant.state_dim()),
            &self.name,
        )
    }

    /// Simulates with the scenario's default `t_total` and `dt`.
    pub fn simulate_default(&self, s_real: f64, seed: u64) -> Result<Dataset> {
        self.simulate(s_real, seed, self.t_total, self.dt)
    }
}
