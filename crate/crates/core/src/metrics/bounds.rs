//! Closed-form right-hand sides of the LSGT and MUST rate bounds.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundError {
    #[error("{name} = {value} is outside its admissible range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

/// Constants entering the LSGT bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    /// Smoothness `L`.
    pub l: f64,
    /// Variance bound `sigma^2`.
    pub sigma2: f64,
    /// `F(y_bar^0) - F_lb`.
    pub f0_minus_flb: f64,
    /// Initial tracking error `phi_v^0`.
    pub phi_v0: f64,
    pub lambda_w: f64,
    pub n: f64,
    /// Local updates `E`.
    pub e: f64,
    /// Rounds `T`.
    pub t: f64,
    /// Batch size `|I|`.
    pub batch: f64,
    pub gamma: f64,
}

/// Value of a bound and whether its side conditions on `E` and `T` hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    pub value: f64,
    pub condition_holds: bool,
}

fn non_negative(name: &'static str, value: f64) -> Result<(), BoundError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(BoundError::OutOfRange {
            name,
            value,
            range: "[0, inf)",
        })
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), BoundError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(BoundError::OutOfRange {
            name,
            value,
            range: "(0, inf)",
        })
    }
}

fn spectral(lambda_w: f64) -> Result<(), BoundError> {
    if (0.0..1.0).contains(&lambda_w) {
        Ok(())
    } else {
        Err(BoundError::OutOfRange {
            name: "lambda_w",
            value: lambda_w,
            range: "[0, 1)",
        })
    }
}

impl TheoryConstants {
    fn validate(&self) -> Result<(), BoundError> {
        non_negative("L", self.l)?;
        non_negative("sigma2", self.sigma2)?;
        non_negative("F0 - F_lb", self.f0_minus_flb)?;
        non_negative("phi_v0", self.phi_v0)?;
        spectral(self.lambda_w)?;
        positive("N", self.n)?;
        positive("E", self.e)?;
        positive("T", self.t)?;
        positive("batch", self.batch)
    }

    /// `(1 + 7 lambda^2)^2 / (1 - lambda^2)^4`.
    fn network_factor(&self) -> f64 {
        let l2 = self.lambda_w * self.lambda_w;
        (1.0 + 7.0 * l2).powi(2) / (1.0 - l2).powi(4)
    }
}

/// LSGT bound for a constant stepsize `gamma in (0, 1)`:
///
/// `4 dF/(gamma E T) + 40 L gamma s2/(N |I|)
///  + 16 (1+7l^2)^2 E^2 L^2 gamma^2/(1-l^2)^4 * (2577 N s2/|I| + 111 phi_v0/T)`.
pub fn theorem1_rhs(tc: &TheoryConstants) -> Result<f64, BoundError> {
    tc.validate()?;
    if !(tc.gamma > 0.0 && tc.gamma < 1.0) {
        return Err(BoundError::OutOfRange {
            name: "gamma",
            value: tc.gamma,
            range: "(0, 1)",
        });
    }
    let TheoryConstants {
        l,
        sigma2,
        f0_minus_flb,
        phi_v0,
        n,
        e,
        t,
        batch,
        gamma,
        ..
    } = *tc;
    let centralized =
        4.0 * f0_minus_flb / (gamma * e * t) + 40.0 * l * gamma * sigma2 / (n * batch);
    let network = 16.0
        * tc.network_factor()
        * e
        * e
        * l
        * l
        * gamma
        * gamma
        * (2577.0 * n * sigma2 / batch + 111.0 * phi_v0 / t);
    Ok(centralized + network)
}

/// LSGT bound at `gamma = sqrt(N/(E T))` (the `gamma` field is ignored):
///
/// `4 dF/sqrt(NET) + 40 L s2/(sqrt(NET) |I|)
///  + 16 (1+7l^2)^2 L^2/((1-l^2)^4 sqrt(NET)) * (2577 s2/|I| + 111 phi_v0/(N T))`.
///
/// The flag reports `E <= (T/N^5)^(1/3)`.
pub fn corollary1_rhs(tc: &TheoryConstants) -> Result<BoundValue, BoundError> {
    tc.validate()?;
    let TheoryConstants {
        l,
        sigma2,
        f0_minus_flb,
        phi_v0,
        n,
        e,
        t,
        batch,
        ..
    } = *tc;
    let root = (n * e * t).sqrt();
    let value = 4.0 * f0_minus_flb / root
        + 40.0 * l * sigma2 / (root * batch)
        + 16.0 * tc.network_factor() * l * l / root
            * (2577.0 * sigma2 / batch + 111.0 * phi_v0 / (n * t));
    Ok(BoundValue {
        value,
        condition_holds: e <= (t / n.powi(5)).cbrt(),
    })
}

/// Constants entering the MUST bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridTheoryConstants {
    pub l: f64,
    pub sigma2: f64,
    /// `F(theta_bar^0, x_bar^0) - F_lb` for the coupled objective.
    pub f0_minus_flb: f64,
    pub phi_z0: f64,
    pub phi_u0: f64,
    /// Largest operator norm of the coupling maps.
    pub b_max: f64,
    pub lambda_w: f64,
    pub n: f64,
    pub e: f64,
    pub t: f64,
    /// Number of samples `S`.
    pub s: f64,
    pub batch: f64,
}

/// MUST bound value and the two side conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Value {
    pub value: f64,
    /// `E <= T^(1/3) / N^3`.
    pub local_updates_ok: bool,
    /// `T >= N^(5/2) E^3`.
    pub rounds_ok: bool,
}

/// MUST bound at `alpha = beta = sqrt(N/(E T))`:
///
/// `1000 dF/sqrt(NET) + 14 L s2/(sqrt(NET)|I|)
///  + 222 L^2 (1+7l^2)^2 B^2 s2/(sqrt(NET) N (1-l^2)^6 |I|)
///  + 2 L^2 B^2/(sqrt(NET) N (1-l^2)^4)
///    * (990 phi_z0/(S E N) + 59 (1+7l^2) phi_u0/((1-l^2) T))`.
pub fn theorem2_rhs(hc: &HybridTheoryConstants) -> Result<Theorem2Value, BoundError> {
    non_negative("L", hc.l)?;
    non_negative("sigma2", hc.sigma2)?;
    non_negative("F0 - F_lb", hc.f0_minus_flb)?;
    non_negative("phi_z0", hc.phi_z0)?;
    non_negative("phi_u0", hc.phi_u0)?;
    non_negative("B_max", hc.b_max)?;
    spectral(hc.lambda_w)?;
    for (name, v) in [
        ("N", hc.n),
        ("E", hc.e),
        ("T", hc.t),
        ("S", hc.s),
        ("batch", hc.batch),
    ] {
        positive(name, v)?;
    }
    let HybridTheoryConstants {
        l,
        sigma2,
        f0_minus_flb,
        phi_z0,
        phi_u0,
        b_max,
        lambda_w,
        n,
        e,
        t,
        s,
        batch,
    } = *hc;
    let root = (n * e * t).sqrt();
    let l2 = lambda_w * lambda_w;
    let (a, gap) = (1.0 + 7.0 * l2, 1.0 - l2);
    let b2 = b_max * b_max;
    let value = 1000.0 * f0_minus_flb / root
        + 14.0 * l * sigma2 / (root * batch)
        + 222.0 * l * l * a * a * b2 * sigma2 / (root * n * gap.powi(6) * batch)
        + 2.0 * l * l * b2 / (root * n * gap.powi(4))
            * (990.0 * phi_z0 / (s * e * n) + 59.0 * a * phi_u0 / (gap * t));
    Ok(Theorem2Value {
        value,
        local_updates_ok: e <= t.cbrt() / n.powi(3),
        rounds_ok: t >= n.powf(2.5) * e.powi(3),
    })
}
