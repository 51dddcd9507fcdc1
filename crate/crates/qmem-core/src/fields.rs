//! Memory and control parameter vectors and the Gaussian pulse envelopes.
//!
//! All frequencies and times are normalized by the excited-state coherence
//! decay rate gamma (and 1/gamma); lengths by the medium length.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

/// 2 sqrt(2 ln 2): converts an intensity FWHM to the Gaussian sigma.
pub const FWHM_TO_SIGMA: f64 = 2.354820045030949;

/// Memory parameter vector: optical depth, normalized signal duration,
/// normalized two-photon detuning, spin-wave decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryParams {
    /// Resonant optical depth; enters the equations of motion as sqrt(d).
    pub d: f64,
    /// Signal intensity FWHM in units of 1/gamma.
    pub tau_sig: f64,
    /// Two-photon detuning in units of gamma; either sign allowed.
    pub delta: f64,
    /// Spin-wave coherence decay in units of gamma.
    pub gamma_b: f64,
}

impl MemoryParams {
    pub fn new(d: f64, tau_sig: f64, delta: f64, gamma_b: f64) -> Result<MemoryParams> {
        if !d.is_finite() || d < 0.0 {
            return Err(invalid_arg(format!("optical depth must be >= 0, got {d}")));
        }
        if !tau_sig.is_finite() || tau_sig <= 0.0 {
            return Err(invalid_arg(format!("signal duration must be > 0, got {tau_sig}")));
        }
        if !delta.is_finite() {
            return Err(invalid_arg("detuning must be finite"));
        }
        if !gamma_b.is_finite() || gamma_b < 0.0 {
            return Err(invalid_arg(format!("gamma_b must be >= 0, got {gamma_b}")));
        }
        Ok(MemoryParams {
            d,
            tau_sig,
            delta,
            gamma_b,
        })
    }

    /// Resonant memory with gamma_b = 0.
    pub fn resonant(d: f64, tau_sig: f64) -> Result<MemoryParams> {
        MemoryParams::new(d, tau_sig, 0.0, 0.0)
    }

    pub fn sigma_sig(&self) -> f64 {
        self.tau_sig / FWHM_TO_SIGMA
    }

    /// Adiabaticity product d * tau_sig * gamma.
    pub fn adiabaticity(&self) -> f64 {
        self.d * self.tau_sig
    }
}

/// Gaussian control field parameter vector: pulse area, delay, duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Pulse area in radians.
    pub theta: f64,
    /// Delay relative to the signal peak, in units of 1/gamma; positive
    /// means the control arrives after the signal.
    pub delay: f64,
    /// Control intensity FWHM in units of 1/gamma.
    pub tau_ctrl: f64,
}

impl ControlParams {
    pub fn new(theta: f64, delay: f64, tau_ctrl: f64) -> Result<ControlParams> {
        if !theta.is_finite() || theta < 0.0 {
            return Err(invalid_arg(format!("pulse area must be >= 0, got {theta}")));
        }
        if !delay.is_finite() {
            return Err(invalid_arg("control delay must be finite"));
        }
        if !tau_ctrl.is_finite() || tau_ctrl <= 0.0 {
            return Err(invalid_arg(format!("control duration must be > 0, got {tau_ctrl}")));
        }
        Ok(ControlParams {
            theta,
            delay,
            tau_ctrl,
        })
    }

    pub fn sigma_ctrl(&self) -> f64 {
        self.tau_ctrl / FWHM_TO_SIGMA
    }

    /// Peak Rabi frequency Omega_0 = theta / (2 sqrt(pi) sigma_ctrl).
    pub fn omega0(&self) -> f64 {
        self.theta / (2.0 * std::f64::consts::PI.sqrt() * self.sigma_ctrl())
    }
}

/// Input signal amplitude exp(-tau^2 / 4 sigma^2), peak 1 at tau = 0.
pub fn signal_envelope(tau: f64, tau_sig: f64) -> Result<f64> {
    if !tau_sig.is_finite() || tau_sig <= 0.0 {
        return Err(invalid_arg(format!("signal duration must be > 0, got {tau_sig}")));
    }
    let sigma = tau_sig / FWHM_TO_SIGMA;
    Ok((-tau * tau / (4.0 * sigma * sigma)).exp())
}

/// Control Rabi frequency Omega(tau): real, nonnegative Gaussian with
/// area theta centered at the delay.
pub fn control_envelope(tau: f64, g: &ControlParams) -> f64 {
    let sigma = g.sigma_ctrl();
    let s = (tau - g.delay) / (2.0 * sigma);
    g.omega0() * (-s * s).exp()
}

/// Spectral intensity bandwidth of the transform-limited signal,
/// delta = 2 pi * 2 ln 2 / (pi tau_FWHM), in units of gamma.
pub fn signal_bandwidth(tau_sig: f64) -> Result<f64> {
    if !tau_sig.is_finite() || tau_sig <= 0.0 {
        return Err(invalid_arg(format!("signal duration must be > 0, got {tau_sig}")));
    }
    Ok(4.0 * std::f64::consts::LN_2 / tau_sig)
}
