//! Surface loss: effective loss tangent from unsaturated TLS loss versus
//! metal-substrate participation, and oxide thickness from XPS intensities.

use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::model::Estimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanDeltaFit {
    /// (p_MS, Q_TLS0) as supplied.
    pub points: Vec<(f64, Estimate)>,
    pub tan_delta: Estimate,
    /// 1/Q_TLS0 − p·tanδ for every used point, in input order.
    pub residuals: Vec<f64>,
    /// Indices of points dropped because σ ≥ Q_TLS0.
    pub excluded: Vec<usize>,
    pub reduced_chi2: f64,
}

/// tanδ implied by a single resonator, 1/(p_MS·Q_TLS0).
pub fn implied_tan_delta(p_ms: f64, q_tls0: f64) -> Result<f64> {
    require_positive("p_MS", p_ms)?;
    require_positive("Q_TLS0", q_tls0)?;
    Ok(1.0 / (p_ms * q_tls0))
}

/// Zero-intercept weighted fit of 1/Q_TLS0 = p_MS·tanδ.
///
/// Weights are 1/σ(1/Q)² with σ(1/Q) = σ_Q/Q². If no point carries a σ the
/// fit is unweighted. The reported σ is inflated by √χ²_red when the scatter
/// exceeds the stated errors.
pub fn fit_tan_delta(points: &[(f64, Estimate)]) -> Result<TanDeltaFit> {
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    for (i, (p, q)) in points.iter().enumerate() {
        require_positive("p_MS", *p)?;
        require_positive("Q_TLS0", q.value)?;
        require_finite("sigma(Q_TLS0)", q.sigma)?;
        if q.sigma >= q.value {
            excluded.push(i);
        } else {
            used.push(i);
        }
    }
    let distinct = used.iter().any(|&i| points[i].0 != points[used[0]].0);
    if used.len() < 2 || !distinct {
        return Err(Error::Insufficient(
            "surface-loss fit needs ≥ 2 usable points with distinct p_MS".into(),
        ));
    }
    let with_sigma = used.iter().filter(|&&i| points[i].1.sigma > 0.0).count();
    if with_sigma != 0 && with_sigma != used.len() {
        return Err(Error::Validation("either all or none of the Q_TLS0 values must carry σ".into()));
    }
    let weighted = with_sigma > 0;
    let w = |q: &Estimate| if weighted { (q.value * q.value / q.sigma).powi(2) } else { 1.0 };

    let (mut num, mut den) = (0.0, 0.0);
    for &i in &used {
        let (p, q) = &points[i];
        num += w(q) * p / q.value;
        den += w(q) * p * p;
    }
    let tan = num / den;
    let residuals: Vec<f64> = used.iter().map(|&i| 1.0 / points[i].1.value - points[i].0 * tan).collect();
    let chi2: f64 = used.iter().zip(&residuals).map(|(&i, r)| w(&points[i].1) * r * r).sum();
    let chi2_red = chi2 / (used.len() - 1) as f64;
    let scale = if weighted { chi2_red.max(1.0) } else { chi2_red };
    Ok(TanDeltaFit {
        points: points.to_vec(),
        tan_delta: Estimate::new(tan, (scale / den).sqrt()),
        residuals,
        excluded,
        reduced_chi2: chi2_red,
    })
}

/// Q_TLS0 limit set by the surface loss alone, 1/(p_MS·tanδ).
pub fn surface_limited_q(p_ms: f64, tan_delta: f64) -> Result<f64> {
    require_positive("p_MS", p_ms)?;
    require_positive("tan_delta", tan_delta)?;
    Ok(1.0 / (p_ms * tan_delta))
}

/// XPS overlayer inputs. Intensities are relative; `i_ox` sums the oxidized
/// components and `i_m` is the metallic one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XpsInput {
    pub i_ox: f64,
    pub i_m: f64,
    /// Effective attenuation length in m.
    #[serde(rename = "lambda_eff_m")]
    pub lambda_eff: f64,
    /// Metal atom density in m⁻³.
    #[serde(rename = "n_m_per_m3")]
    pub n_m: f64,
    /// Oxide metal-atom density in m⁻³.
    #[serde(rename = "n_ox_per_m3")]
    pub n_ox: f64,
}

/// Overlayer thickness λ_eff·ln((N_m/N_ox)(I_ox/I_m) + 1), in m.
pub fn oxide_thickness(x: &XpsInput) -> Result<f64> {
    require_finite("I_ox", x.i_ox)?;
    if x.i_ox < 0.0 {
        return Err(Error::Domain(format!("I_ox must be non-negative, got {}", x.i_ox)));
    }
    require_positive("I_m", x.i_m)?;
    require_positive("lambda_eff", x.lambda_eff)?;
    require_positive("N_m", x.n_m)?;
    require_positive("N_ox", x.n_ox)?;
    Ok(x.lambda_eff * (x.n_m / x.n_ox * x.i_ox / x.i_m).ln_1p())
}

/// Share of the β−α loss-tangent excess explained by a thicker oxide when
/// the metal-air loss scales linearly with thickness.
pub fn ma_excess_fraction(t_beta: f64, t_alpha: f64, rescaled_ma_tan: f64, tan_beta: f64, tan_alpha: f64) -> Result<f64> {
    require_positive("t_beta", t_beta)?;
    require_positive("t_alpha", t_alpha)?;
    require_positive("rescaled MA tan", rescaled_ma_tan)?;
    require_positive("tan_beta", tan_beta)?;
    require_positive("tan_alpha", tan_alpha)?;
    if t_beta < t_alpha {
        return Err(Error::Domain(format!("t_beta ({t_beta}) below t_alpha ({t_alpha})")));
    }
    if tan_beta <= tan_alpha {
        return Err(Error::Domain("no excess to apportion".into()));
    }
    Ok(rescaled_ma_tan * (t_beta / t_alpha - 1.0) / (tan_beta - tan_alpha))
}
