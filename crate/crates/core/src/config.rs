//! Run configuration: a flat TOML file, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distance::{LedgerInputs, NoiseChannel};
use crate::error::{Error, Result};
use crate::model::{Kernel, ModelParams};
use crate::sim::{Coupling, Dynamics, InitialLaw};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Zero,
    Linear,
    BoundedTanh,
}

/// Keys left out take their default values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma_x: f64,
    pub sigma_c: f64,

    pub kernel_x: KernelChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_x_a11: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_x_a12: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_x_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_x_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_x_lipschitz: Option<f64>,
    pub kernel_c: KernelChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_c_a11: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_c_a12: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_c_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_c_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_c_lipschitz: Option<f64>,

    pub init_mean_x: f64,
    pub init_mean_c: f64,
    pub init_std_x: f64,
    pub init_std_c: f64,

    pub n: usize,
    pub m: usize,
    pub dt: f64,
    pub t_end: f64,
    pub sample_stride: u64,
    pub seed: u64,
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub coupling: Coupling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_x: Option<f64>,

    pub eta: f64,
    pub delta_tilde: f64,
    pub a_tilde: f64,
    pub c_init_exp: f64,
    pub l_x_max: f64,
    pub l_c_max: f64,
    /// Mollifier width; `1e-3·R` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,

    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ModelParams::default();
        let law = InitialLaw::default();
        Self {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            sigma_x: p.sigma_x,
            sigma_c: p.sigma_c,
            kernel_x: KernelChoice::Zero,
            kernel_x_a11: None,
            kernel_x_a12: None,
            kernel_x_scale: None,
            kernel_x_rate: None,
            kernel_x_lipschitz: None,
            kernel_c: KernelChoice::Zero,
            kernel_c_a11: None,
            kernel_c_a12: None,
            kernel_c_scale: None,
            kernel_c_rate: None,
            kernel_c_lipschitz: None,
            init_mean_x: law.mean_x,
            init_mean_c: law.mean_c,
            init_std_x: law.std_x,
            init_std_c: law.std_c,
            n: 256,
            m: 4096,
            dt: 1e-3,
            t_end: 10.0,
            sample_stride: 100,
            seed: 20240601,
            replicas: 1,
            threads: None,
            coupling: Coupling::ReflectionX,
            clamp_x: None,
            eta: 5.0,
            delta_tilde: 0.1,
            a_tilde: 1.0,
            c_init_exp: 20.0,
            l_x_max: 4.0,
            l_c_max: 0.2,
            xi: None,
            lambda: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

struct KernelFields<'a> {
    axis: &'a str,
    choice: KernelChoice,
    a11: Option<f64>,
    a12: Option<f64>,
    scale: Option<f64>,
    rate: Option<f64>,
    lipschitz: Option<f64>,
}

impl KernelFields<'_> {
    fn build(&self) -> Result<Kernel> {
        let field = |name: &str| format!("kernel_{}_{}", self.axis, name);
        let forbid = |name: &str, v: Option<f64>| -> Result<()> {
            match v {
                Some(_) => Err(Error::invalid(field(name), format!("not used by kind {:?}", self.choice))),
                None => Ok(()),
            }
        };
        let need = |name: &str, v: Option<f64>| -> Result<f64> {
            match v {
                Some(x) if x.is_finite() => Ok(x),
                Some(_) => Err(Error::invalid(field(name), "must be finite")),
                None => Err(Error::invalid(field(name), "required")),
            }
        };
        let k = match self.choice {
            KernelChoice::Zero => {
                for (n, v) in [("a11", self.a11), ("a12", self.a12), ("scale", self.scale), ("rate", self.rate)] {
                    forbid(n, v)?;
                }
                Kernel::zero()
            }
            KernelChoice::Linear => {
                forbid("scale", self.scale)?;
                forbid("rate", self.rate)?;
                Kernel::linear(need("a11", self.a11.or(Some(0.0)))?, need("a12", self.a12.or(Some(0.0)))?)
            }
            KernelChoice::BoundedTanh => {
                forbid("a11", self.a11)?;
                forbid("a12", self.a12)?;
                Kernel::bounded_tanh(need("scale", self.scale)?, need("rate", self.rate)?)
            }
        };
        match self.lipschitz {
            Some(l) => k.with_lipschitz(l).map_err(|_| {
                Error::invalid(field("lipschitz"), "declared constant below the kernel's own Lipschitz constant")
            }),
            None => Ok(k),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn params(&self) -> ModelParams {
        ModelParams { alpha: self.alpha, beta: self.beta, gamma: self.gamma, sigma_x: self.sigma_x, sigma_c: self.sigma_c }
    }

    pub fn kernel_x(&self) -> Result<Kernel> {
        KernelFields {
            axis: "x",
            choice: self.kernel_x,
            a11: self.kernel_x_a11,
            a12: self.kernel_x_a12,
            scale: self.kernel_x_scale,
            rate: self.kernel_x_rate,
            lipschitz: self.kernel_x_lipschitz,
        }
        .build()
    }

    pub fn kernel_c(&self) -> Result<Kernel> {
        KernelFields {
            axis: "c",
            choice: self.kernel_c,
            a11: self.kernel_c_a11,
            a12: self.kernel_c_a12,
            scale: self.kernel_c_scale,
            rate: self.kernel_c_rate,
            lipschitz: self.kernel_c_lipschitz,
        }
        .build()
    }

    /// Sets a linear kernel on the given axis.
    pub fn set_linear(&mut self, axis: char, a11: f64, a12: f64) {
        let (kind, x11, x12, sc, ra, li) = match axis {
            'x' => (
                &mut self.kernel_x,
                &mut self.kernel_x_a11,
                &mut self.kernel_x_a12,
                &mut self.kernel_x_scale,
                &mut self.kernel_x_rate,
                &mut self.kernel_x_lipschitz,
            ),
            _ => (
                &mut self.kernel_c,
                &mut self.kernel_c_a11,
                &mut self.kernel_c_a12,
                &mut self.kernel_c_scale,
                &mut self.kernel_c_rate,
                &mut self.kernel_c_lipschitz,
            ),
        };
        *kind = KernelChoice::Linear;
        *x11 = Some(a11);
        *x12 = Some(a12);
        *sc = None;
        *ra = None;
        *li = None;
    }

    pub fn dynamics(&self) -> Result<Dynamics> {
        Ok(Dynamics { params: self.params(), kx: self.kernel_x()?, kc: self.kernel_c()?, clamp: self.clamp_x })
    }

    pub fn initial_law(&self) -> InitialLaw {
        InitialLaw { mean_x: self.init_mean_x, mean_c: self.init_mean_c, std_x: self.init_std_x, std_c: self.init_std_c }
    }

    pub fn channel(&self) -> NoiseChannel {
        if self.coupling == Coupling::ReflectionC || self.sigma_x == 0.0 {
            NoiseChannel::C
        } else {
            NoiseChannel::X
        }
    }

    pub fn ledger_inputs(&self) -> Result<LedgerInputs> {
        Ok(LedgerInputs {
            l_x: self.kernel_x()?.lipschitz,
            l_c: self.kernel_c()?.lipschitz,
            l_x_max: self.l_x_max,
            l_c_max: self.l_c_max,
            eta: self.eta,
            delta_tilde: self.delta_tilde,
            a_tilde: self.a_tilde,
            c_init_exp: self.c_init_exp,
            xi: self.xi,
            lambda: self.lambda,
            channel: self.channel(),
        })
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.kernel_x()?;
        self.kernel_c()?;
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, "must be > 0"))
            }
        };
        pos("dt", self.dt)?;
        pos("eta", self.eta)?;
        pos("a_tilde", self.a_tilde)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("t_end", "must be ≥ 0"));
        }
        if !(self.init_std_x >= 0.0 && self.init_std_c >= 0.0) {
            return Err(Error::invalid("init_std_x/init_std_c", "must be ≥ 0"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n", "must be ≥ 1"));
        }
        if self.m < self.n.max(2) {
            return Err(Error::invalid("m", "must be ≥ max(n, 2)"));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("replicas", "must be ≥ 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads", "must be ≥ 1"));
        }
        let steps = self.steps();
        if (steps as f64 * self.dt - self.t_end).abs() > self.dt * (1.0 + 1e-9) * 0.5 + 1e-12 * self.t_end {
            return Err(Error::invalid("t_end", "must be a whole number of steps"));
        }
        if self.sample_stride == 0 || !steps.is_multiple_of(self.sample_stride) {
            return Err(Error::invalid("sample_stride", format!("must divide the step count {steps}")));
        }
        match self.coupling {
            Coupling::ReflectionX if self.sigma_x <= 0.0 => {
                return Err(Error::invalid("coupling", "reflection_x requires sigma_x > 0"))
            }
            Coupling::ReflectionC if self.sigma_x != 0.0 || self.sigma_c <= 0.0 => {
                return Err(Error::invalid("coupling", "reflection_c requires sigma_x = 0 and sigma_c > 0"))
            }
            _ => {}
        }
        let moment = self.initial_law().exp_moment(self.a_tilde);
        if moment > self.c_init_exp {
            return Err(Error::invalid(
                "c_init_exp",
                format!("the initial law has E exp(a_tilde(|X|+|C|)) = {moment:.6}, above the declared bound"),
            ));
        }
        Ok(())
    }

    pub fn effective_threads(&self, flag: Option<usize>) -> usize {
        flag.or(self.threads)
            .or_else(|| std::env::var("FHN_THREADS").ok().and_then(|s| s.parse().ok()))
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
            .max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut text = RunConfig::default().to_toml();
        text.push_str("\nsigmax = 1.0\n");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("sigmax"), "{err}");
    }

    #[test]
    fn stride_must_divide() {
        let cfg = RunConfig { sample_stride: 7, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { t_end: 0.0, ..Default::default() };
        cfg.validate().unwrap();
    }

    #[test]
    fn kernel_fields() {
        let mut cfg = RunConfig::default();
        cfg.set_linear('x', 0.5, 0.25);
        assert_eq!(cfg.kernel_x().unwrap().lipschitz, 0.75);
        cfg.kernel_x_lipschitz = Some(0.5);
        assert!(cfg.validate().is_err());
        cfg.kernel_x_lipschitz = Some(1.0);
        cfg.validate().unwrap();
        cfg.kernel_x_rate = Some(1.0);
        assert!(cfg.validate().is_err());
    }
}
