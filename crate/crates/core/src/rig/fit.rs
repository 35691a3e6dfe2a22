//! Weighted least-squares calibration of the tensile law.
//!
//! Targets are (compression, strain, mean force, std) tuples. For a fixed
//! stiffening exponent the law is linear in its four coefficients, so the
//! fitter profiles the exponent over a dense grid, solving a 4x4 weighted
//! normal system at each step with non-negativity enforced by an active-set
//! clamp. Non-negative coefficients keep the fitted law non-negative and
//! monotone in compression over the whole working domain.

use crate::error::{Result, SimError};
use crate::media::ConstitutiveParams;
use crate::real::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRow<T> {
    pub compression: T,
    pub strain: T,
    pub mean_force_n: T,
    pub std_force_n: T,
    /// Where the tuple came from, free form; kept so datasets stay auditable.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets<T> {
    pub rows: Vec<TargetRow<T>>,
}

impl<T: Real> CalibrationTargets<T> {
    /// The built-in bulk characterization dataset: two strains by two
    /// preparations, quoted as mean and std over repeated pulls.
    pub fn builtin() -> Self {
        let row = |c: f64, e: f64, m: f64, s: f64, label: &str| TargetRow {
            compression: T::of(c),
            strain: T::of(e),
            mean_force_n: T::of(m),
            std_force_n: T::of(s),
            label: label.to_string(),
        };
        CalibrationTargets {
            rows: vec![
                row(0.26, 0.30, 34.4, 7.0, "bench compressed, high strain"),
                row(0.00, 0.30, 16.5, 5.5, "bench uncompressed, high strain"),
                row(0.26, 0.10, 9.3, 2.7, "bench compressed, low strain"),
                row(0.00, 0.10, 5.4, 1.2, "bench uncompressed, low strain"),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() < 4 {
            return Err(SimError::IllPosed(format!(
                "{} target rows, need at least 4",
                self.rows.len()
            )));
        }
        let mut cs: Vec<f64> = Vec::new();
        let mut es: Vec<f64> = Vec::new();
        for r in &self.rows {
            if r.std_force_n <= T::zero()
                || !r.std_force_n.is_finite()
                || !r.mean_force_n.is_finite()
            {
                return Err(SimError::IllPosed(format!(
                    "target `{}` needs positive finite std",
                    r.label
                )));
            }
            if r.strain <= T::zero() || r.compression < T::zero() {
                return Err(SimError::IllPosed(format!(
                    "target `{}` has strain {} compression {}",
                    r.label, r.strain, r.compression
                )));
            }
            let c = r.compression.as_f64();
            let e = r.strain.as_f64();
            if !cs.iter().any(|&v| (v - c).abs() < 1e-9) {
                cs.push(c);
            }
            if !es.iter().any(|&v| (v - e).abs() < 1e-9) {
                es.push(e);
            }
        }
        if cs.len() < 2 || es.len() < 2 {
            return Err(SimError::IllPosed(format!(
                "targets span {} compression and {} strain levels, need 2 of each",
                cs.len(),
                es.len()
            )));
        }
        Ok(())
    }

    /// Read rows from CSV with header `c,strain,mean_N,std_N`. An optional
    /// fifth `label` column is carried through.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(reader);
        {
            let head = rdr
                .headers()
                .map_err(|e| SimError::Parse(format!("targets csv: {e}")))?;
            let want = ["c", "strain", "mean_N", "std_N"];
            if head.len() < 4 || head.iter().take(4).zip(want).any(|(h, w)| h.trim() != w) {
                return Err(SimError::Parse(format!(
                    "targets csv header `{}`, want `c,strain,mean_N,std_N[,label]`",
                    head.iter().collect::<Vec<_>>().join(",")
                )));
            }
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SimError::Parse(format!("targets csv: {e}")))?;
            let num = |j: usize| -> Result<T> {
                rec.get(j)
                    .ok_or_else(|| SimError::Parse(format!("row {i}: missing column {j}")))?
                    .trim()
                    .parse::<f64>()
                    .map(T::of)
                    .map_err(|e| SimError::Parse(format!("row {i} column {j}: {e}")))
            };
            rows.push(TargetRow {
                compression: num(0)?,
                strain: num(1)?,
                mean_force_n: num(2)?,
                std_force_n: num(3)?,
                label: rec
                    .get(4)
                    .map(|s| s.trim().to_string())
                    .unwrap_or_else(|| format!("csv row {i}")),
            });
        }
        let t = CalibrationTargets { rows };
        t.validate()?;
        Ok(t)
    }
}

const EXPONENT_GRID_LO: f64 = 1.2;
const EXPONENT_GRID_HI: f64 = 5.0;
const EXPONENT_GRID_STEP: f64 = 0.01;
/// Objective gaps below this are treated as ties; among ties the exponent
/// nearest the cubic default wins, which pins down the fit when the targets
/// cannot distinguish exponents.
const TIE_TOLERANCE: f64 = 1e-9;
const PREFERRED_EXPONENT: f64 = 3.0;

/// Fit the four force coefficients and the stiffening exponent to the
/// targets, weighting each squared residual by `1/std^2`. Yield parameters
/// are copied from `base` untouched; they shape noise, not the mean.
pub fn fit_constitutive<T: Real>(
    targets: &CalibrationTargets<T>,
    base: &ConstitutiveParams<T>,
) -> Result<ConstitutiveParams<T>> {
    targets.validate()?;
    let rows: Vec<(f64, f64, f64, f64)> = targets
        .rows
        .iter()
        .map(|r| {
            (
                r.compression.as_f64(),
                r.strain.as_f64(),
                r.mean_force_n.as_f64(),
                r.std_force_n.as_f64(),
            )
        })
        .collect();

    let mut best: Option<(f64, f64, [f64; 4])> = None;
    let mut p = EXPONENT_GRID_LO;
    while p <= EXPONENT_GRID_HI + 1e-12 {
        if let Some((obj, coeffs)) = solve_at_exponent(&rows, p) {
            let replace = match &best {
                None => true,
                Some((bobj, bp, _)) => {
                    obj < bobj - TIE_TOLERANCE
                        || (obj < bobj + TIE_TOLERANCE
                            && (p - PREFERRED_EXPONENT).abs()
                                < (bp - PREFERRED_EXPONENT).abs() - 1e-12)
                }
            };
            if replace {
                best = Some((obj, p, coeffs));
            }
        }
        p += EXPONENT_GRID_STEP;
    }
    let (grid_obj, grid_p, grid_coeffs) =
        best.ok_or_else(|| SimError::IllPosed("no solvable exponent".to_string()))?;

    // Local refinement only counts if it genuinely improves the objective;
    // on a tie plateau the grid point stands.
    let mut lo = grid_p - EXPONENT_GRID_STEP;
    let mut hi = grid_p + EXPONENT_GRID_STEP;
    let mut refined = (grid_obj, grid_p, grid_coeffs);
    for _ in 0..40 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let o1 = solve_at_exponent(&rows, m1);
        let o2 = solve_at_exponent(&rows, m2);
        match (o1, o2) {
            (Some((a, ca)), Some((b, cb))) => {
                if a < b {
                    hi = m2;
                    if a < refined.0 {
                        refined = (a, m1, ca);
                    }
                } else {
                    lo = m1;
                    if b < refined.0 {
                        refined = (b, m2, cb);
                    }
                }
            }
            _ => break,
        }
    }
    let (obj, p, coeffs) = if refined.0 < grid_obj - TIE_TOLERANCE {
        refined
    } else {
        (grid_obj, grid_p, grid_coeffs)
    };

    if !obj.is_finite() {
        return Err(SimError::IllPosed("non-finite objective".to_string()));
    }
    let fitted = ConstitutiveParams {
        linear: T::of(coeffs[0]),
        linear_compression: T::of(coeffs[1]),
        stiffening: T::of(coeffs[2]),
        stiffening_compression: T::of(coeffs[3]),
        exponent: T::of(p),
        yield_rate: base.yield_rate,
        yield_drop: base.yield_drop,
        yield_recovery: base.yield_recovery,
    };
    fitted.validate()?;
    Ok(fitted)
}

/// Weighted sum of squared standardized residuals for given params.
pub fn fit_objective<T: Real>(
    targets: &CalibrationTargets<T>,
    params: &ConstitutiveParams<T>,
) -> Result<T> {
    let mut obj = T::zero();
    for r in &targets.rows {
        let f = crate::media::mean_tensile_force(r.strain, r.compression, params)?;
        let z = (f - r.mean_force_n) / r.std_force_n;
        obj += z * z;
    }
    Ok(obj)
}

/// Design row for coefficients (a0, a1, b0, b1) at exponent `p`.
fn design(c: f64, e: f64, p: f64) -> [f64; 4] {
    let ep = e.powf(p);
    [e, c * e, ep, c * ep]
}

fn solve_at_exponent(rows: &[(f64, f64, f64, f64)], p: f64) -> Option<(f64, [f64; 4])> {
    // Active-set clamp: solve unconstrained, zero out the most negative
    // coefficient, repeat on the reduced system.
    let mut free = [true; 4];
    loop {
        let idx: Vec<usize> = (0..4).filter(|&i| free[i]).collect();
        if idx.is_empty() {
            return None;
        }
        let k = idx.len();
        let mut m = vec![vec![0.0; k]; k];
        let mut b = vec![0.0; k];
        for &(c, e, y, s) in rows {
            let w = 1.0 / (s * s);
            let d = design(c, e, p);
            for (r, &ir) in idx.iter().enumerate() {
                b[r] += w * d[ir] * y;
                for (q, &iq) in idx.iter().enumerate() {
                    m[r][q] += w * d[ir] * d[iq];
                }
            }
        }
        let sol = solve_spd(&mut m, &mut b)?;
        if let Some(worst) = idx
            .iter()
            .enumerate()
            .filter(|&(r, _)| sol[r] < -1e-12)
            .min_by(|a, b| sol[a.0].partial_cmp(&sol[b.0]).unwrap())
            .map(|(_, &i)| i)
        {
            free[worst] = false;
            continue;
        }
        let mut coeffs = [0.0; 4];
        for (r, &i) in idx.iter().enumerate() {
            coeffs[i] = sol[r].max(0.0);
        }
        let mut obj = 0.0;
        for &(c, e, y, s) in rows {
            let d = design(c, e, p);
            let f: f64 = (0..4).map(|i| coeffs[i] * d[i]).sum();
            obj += ((f - y) / s).powi(2);
        }
        return Some((obj, coeffs));
    }
}

/// Gaussian elimination with partial pivoting; None when singular.
fn solve_spd(m: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap()
        })?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            let (head, tail) = m.split_at_mut(row);
            for (a, &p) in tail[0][col..n].iter_mut().zip(&head[col][col..n]) {
                *a -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}
