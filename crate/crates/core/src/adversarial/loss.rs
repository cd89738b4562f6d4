use std::fmt;
use std::str::FromStr;

use crate::discriminator::Head;
use crate::error::{Error, Result};

/// Floor applied to logarithm arguments of the sigmoid-headed losses.
pub const LOG_EPS: f64 = 1e-7;

/// Default weight-clipping constant for the Wasserstein critic.
pub const DEFAULT_CLIP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `φ(y) = log y`, `ψ(y) = log(1 − y)`: Jensen–Shannon.
    Js,
    /// `φ(x) = x`, `ψ(x) = −x` with a clipped, unsquashed critic.
    Wasserstein,
    /// `φ(x) = log x`, `ψ(x) = −x`: maximum-likelihood hybrid.
    MalHybrid,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Js, LossKind::Wasserstein, LossKind::MalHybrid];

    pub fn head(self) -> Head {
        match self {
            LossKind::Wasserstein => Head::Identity,
            LossKind::Js | LossKind::MalHybrid => Head::Sigmoid,
        }
    }

    /// Critic updates per generator update.
    pub fn default_critic_steps(self) -> usize {
        match self {
            LossKind::Wasserstein => 5,
            LossKind::Js | LossKind::MalHybrid => 1,
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "js" => Ok(LossKind::Js),
            "wasserstein" | "wgan" => Ok(LossKind::Wasserstein),
            "mal" | "mal-hybrid" => Ok(LossKind::MalHybrid),
            other => Err(Error::Usage(format!("unknown loss `{other}`"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Js => "js",
            LossKind::Wasserstein => "wasserstein",
            LossKind::MalHybrid => "mal-hybrid",
        })
    }
}

/// The `(φ, ψ)` pair defining the adversarial objective
/// `E_data[φ(f(X))] + E_model[ψ(f(Y))]`, with derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossPair {
    pub kind: LossKind,
    /// Present exactly for the Wasserstein pair.
    pub clip: Option<f64>,
}

#[inline]
fn clamped_log(y: f64) -> f64 {
    y.max(LOG_EPS).ln()
}

#[inline]
fn clamped_log_slope(y: f64) -> f64 {
    if y > LOG_EPS {
        1.0 / y
    } else {
        0.0
    }
}

impl LossPair {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            clip: (kind == LossKind::Wasserstein).then_some(DEFAULT_CLIP),
        }
    }

    /// Overrides the clip constant; ignored for sigmoid-headed pairs.
    pub fn with_clip(mut self, c: f64) -> Result<Self> {
        if c.is_nan() || c <= 0.0 {
            return Err(Error::Contract(format!("clip constant {c} must be positive")));
        }
        if self.kind == LossKind::Wasserstein {
            self.clip = Some(c);
        }
        Ok(self)
    }

    pub fn head(&self) -> Head {
        self.kind.head()
    }

    #[inline]
    pub fn phi(&self, y: f64) -> f64 {
        match self.kind {
            LossKind::Js | LossKind::MalHybrid => clamped_log(y),
            LossKind::Wasserstein => y,
        }
    }

    #[inline]
    pub fn psi(&self, y: f64) -> f64 {
        match self.kind {
            LossKind::Js => clamped_log(1.0 - y),
            LossKind::Wasserstein | LossKind::MalHybrid => -y,
        }
    }

    #[inline]
    pub fn dphi(&self, y: f64) -> f64 {
        match self.kind {
            LossKind::Js | LossKind::MalHybrid => clamped_log_slope(y),
            LossKind::Wasserstein => 1.0,
        }
    }

    #[inline]
    pub fn dpsi(&self, y: f64) -> f64 {
        match self.kind {
            LossKind::Js => -clamped_log_slope(1.0 - y),
            LossKind::Wasserstein | LossKind::MalHybrid => -1.0,
        }
    }
}

/// Looks up a loss pair by name (`js`, `wasserstein`, `mal-hybrid`).
pub fn make_loss_pair(name: &str) -> Result<LossPair> {
    Ok(LossPair::new(name.parse()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let js = make_loss_pair("js").unwrap();
        assert!((js.phi(0.5) + std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(js.head(), Head::Sigmoid);
        assert!(js.clip.is_none());

        let w = make_loss_pair("wasserstein").unwrap();
        assert_eq!(w.phi(1.7), 1.7);
        assert_eq!(w.psi(1.7), -1.7);
        assert_eq!(w.head(), Head::Identity);
        assert_eq!(w.clip, Some(DEFAULT_CLIP));

        let mal = make_loss_pair("mal-hybrid").unwrap();
        assert_eq!(mal.psi(2.0), -2.0);
        assert_eq!(mal.dpsi(2.0), -1.0);
        assert_eq!(mal.head(), Head::Sigmoid);

        assert!(make_loss_pair("kl").is_err());
    }

    #[test]
    fn js_log_arguments_are_floored() {
        let js = LossPair::new(LossKind::Js);
        assert_eq!(js.phi(0.0), LOG_EPS.ln());
        assert_eq!(js.psi(1.0), LOG_EPS.ln());
        assert_eq!(js.dphi(0.0), 0.0);
        assert_eq!(js.dpsi(1.0), 0.0);
        assert!(js.phi(1e-300).is_finite());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for kind in LossKind::ALL {
            let pair = LossPair::new(kind);
            for &y in &[0.1, 0.35, 0.5, 0.8, 0.95] {
                let fd_phi = (pair.phi(y + h) - pair.phi(y - h)) / (2.0 * h);
                let fd_psi = (pair.psi(y + h) - pair.psi(y - h)) / (2.0 * h);
                assert!((fd_phi - pair.dphi(y)).abs() < 1e-7, "{kind} φ′({y})");
                assert!((fd_psi - pair.dpsi(y)).abs() < 1e-7, "{kind} ψ′({y})");
            }
        }
    }

    #[test]
    fn clip_override() {
        let w = LossPair::new(LossKind::Wasserstein).with_clip(0.05).unwrap();
        assert_eq!(w.clip, Some(0.05));
        assert!(LossPair::new(LossKind::Js).with_clip(0.05).unwrap().clip.is_none());
        assert!(LossPair::new(LossKind::Wasserstein).with_clip(0.0).is_err());
    }
}
