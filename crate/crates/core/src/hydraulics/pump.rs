//! Pump group head and power characteristics.

use crate::network::PumpModel;

use super::HydraulicError;

impl PumpModel {
    /// Head curve in the n^2-scaled group form `A q^2 + B q n s + C n^2 s^2`.
    ///
    /// Dividing by `n^2` gives the head gain across the group, see
    /// [`PumpModel::group_head`].
    pub fn scaled_head(&self, q: f64, n: f64, s: f64) -> f64 {
        let h = &self.head;
        h.a * q * q + h.b * q * n * s + h.c * n * n * s * s
    }

    /// Head gain of `n` identical pumps in parallel at speed `s` carrying a
    /// total flow `q`: each unit carries `q / n`, so the gain is
    /// `s^2 h(q / (n s))` with `h` the nominal-speed single-pump curve.
    pub fn group_head(&self, q: f64, n: f64, s: f64) -> f64 {
        self.scaled_head(q, n, s) / (n * n)
    }

    /// d(group_head)/dq.
    pub fn group_head_slope(&self, q: f64, n: f64, s: f64) -> f64 {
        let h = &self.head;
        2.0 * h.a * q / (n * n) + h.b * s / n
    }

    /// Power of a single pump with flow `q` at speed `s`, no domain check.
    pub fn unit_power(&self, q: f64, s: f64) -> f64 {
        let a = &self.power;
        ((a.a3 * q + a.a2 * s) * q + a.a1 * s * s) * q + a.a0 * s * s * s
    }
}

/// Power drawn by a group of `n` identical pumps at speed `s` with total flow `q`.
pub fn group_power(model: &PumpModel, q: f64, n: u32, s: f64) -> Result<f64, HydraulicError> {
    if n == 0 || s <= 0.0 {
        return Err(HydraulicError::Domain(format!(
            "power needs n >= 1 and s > 0 (n={n}, s={s})"
        )));
    }
    let n = n as f64;
    let unit = q / (n * s);
    let limit = model.unit_intercept();
    // Allow rounding noise at the ends of the curve.
    let slack = 1e-9 * limit.max(1.0);
    if unit < -slack || unit > limit + slack {
        return Err(HydraulicError::Domain(format!(
            "scaled flow {unit:.6} L/s outside [0, {limit:.6}]"
        )));
    }
    Ok(n * s.powi(3) * model.power.eval(unit))
}

/// Positive flow at which the head of `n` pumps at speed `s` drops to zero.
pub fn intercept_flow(model: &PumpModel, n: u32, s: f64) -> Result<f64, HydraulicError> {
    let (a, b, c) = (
        model.head.a,
        model.head.b * n as f64 * s,
        model.head.c * (n as f64 * s).powi(2),
    );
    let disc = b * b - 4.0 * a * c;
    if a == 0.0 || disc < 0.0 {
        return Err(HydraulicError::NoPositiveRoot);
    }
    let sq = disc.sqrt();
    // Stable form of the larger root (a < 0).
    let root = if b >= 0.0 {
        (-b - sq) / (2.0 * a)
    } else {
        (2.0 * c) / (-b + sq)
    };
    if root > 0.0 && root.is_finite() {
        Ok(root)
    } else {
        Err(HydraulicError::NoPositiveRoot)
    }
}
