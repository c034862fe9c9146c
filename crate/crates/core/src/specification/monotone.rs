use std::sync::OnceLock;

use crate::error::{invalid, Result};
use crate::lattice::{LocalFunction, Region, Spin, Tail, TailedConfiguration, MINUS, PLUS};

use super::{FiniteMeasure, KernelRecipe, KernelTable};

/// Slack allowed in every monotonicity comparison.
pub const MONOTONE_TOLERANCE: f64 = 1e-12;

/// Largest volume for which all increasing events are enumerated.
const FULL_ENUMERATION_SITES: usize = 6;

/// Largest volume for which catalogue functions over the whole volume are built.
const CATALOGUE_FULL_SUPPORT: usize = 20;

/// All up-sets of `{−,+}^n` (`n ≤ 5`) as bit masks over configurations.
pub fn upsets(n: usize) -> &'static [u64] {
    static TABLES: OnceLock<Vec<Vec<u64>>> = OnceLock::new();
    assert!(n <= 5, "explicit up-set lists stop at n = 5");
    let all = TABLES.get_or_init(|| {
        let mut t = vec![vec![0u64, 1u64]];
        for k in 1..=5 {
            let half = 1u32 << (k - 1);
            let prev = &t[k - 1];
            let mut next = Vec::new();
            for &a1 in prev {
                for &a0 in prev {
                    if a0 & !a1 == 0 {
                        next.push(a0 | a1 << half);
                    }
                }
            }
            next.sort_unstable();
            t.push(next);
        }
        t
    });
    &all[n]
}

/// Index pairs `(i0, i1)` into `upsets(5)` with `A0 ⊆ A1`.
fn nested_pairs_5() -> &'static [(u16, u16)] {
    static PAIRS: OnceLock<Vec<(u16, u16)>> = OnceLock::new();
    PAIRS.get_or_init(|| {
        let u = upsets(5);
        let mut v = Vec::new();
        for (i1, &a1) in u.iter().enumerate() {
            for (i0, &a0) in u.iter().enumerate() {
                if a0 & !a1 == 0 {
                    v.push((i0 as u16, i1 as u16));
                }
            }
        }
        v
    })
}

fn mask_sum(mask: u64, d: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut m = mask;
    while m != 0 {
        let i = m.trailing_zeros() as usize;
        s += d[i];
        m &= m - 1;
    }
    s
}

/// `max_A Σ_{x∈A} d(x)` over up-sets `A` of `{−,+}^n`, `n ≤ 6`, with the
/// maximizing up-set as a mask over configurations (bit `c` = config `c`).
pub fn max_upset_gap(d: &[f64], n: usize) -> (f64, u64) {
    assert_eq!(d.len(), 1 << n);
    if n <= 5 {
        let mut best = (f64::NEG_INFINITY, 0);
        for &a in upsets(n) {
            let s = mask_sum(a, d);
            if s > best.0 {
                best = (s, a);
            }
        }
        return best;
    }
    assert_eq!(n, 6, "up-set enumeration stops at six sites");
    let u = upsets(5);
    let lo: Vec<f64> = u.iter().map(|&a| mask_sum(a, &d[..32])).collect();
    let hi: Vec<f64> = u.iter().map(|&a| mask_sum(a, &d[32..])).collect();
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for &(i0, i1) in nested_pairs_5() {
        let s = lo[i0 as usize] + hi[i1 as usize];
        if s > best.0 {
            best = (s, i0 as usize, i1 as usize);
        }
    }
    (best.0, u[best.1] | u[best.2] << 32)
}

/// An increasing event or function on a volume, with a label.
#[derive(Clone, Debug)]
pub struct IncreasingEvent {
    pub description: String,
    pub function: LocalFunction,
}

impl IncreasingEvent {
    fn from_mask(region: &Region, mask: u64) -> Self {
        let f = LocalFunction::indicator(region.clone(), |c| mask >> c & 1 == 1).expect("small region");
        Self { description: format!("up-set {mask:#x}"), function: f }
    }
}

/// Fixed catalogue of increasing functions on `region`: single spins,
/// single-spin indicators, all-plus indicators over sets of size 2 and 3 and
/// over the whole region, magnetization and magnetization thresholds.
pub fn increasing_catalogue(region: &Region) -> Vec<IncreasingEvent> {
    let dim = region.dim();
    let sites = region.sites();
    let mut out = Vec::new();
    let push = |out: &mut Vec<IncreasingEvent>, d: String, f: Result<LocalFunction>| {
        if let Ok(function) = f {
            out.push(IncreasingEvent { description: d, function });
        }
    };
    for &s in sites {
        push(&mut out, format!("spin {s}"), Ok(LocalFunction::spin_at(s, dim)));
        push(&mut out, format!("plus at {s}"), LocalFunction::all_plus_indicator(dim, [s]));
    }
    for i in 0..sites.len() {
        for j in i + 1..sites.len() {
            push(&mut out, format!("plus at {} {}", sites[i], sites[j]), LocalFunction::all_plus_indicator(dim, [sites[i], sites[j]]));
            for k in j + 1..sites.len() {
                push(
                    &mut out,
                    format!("plus at {} {} {}", sites[i], sites[j], sites[k]),
                    LocalFunction::all_plus_indicator(dim, [sites[i], sites[j], sites[k]]),
                );
            }
        }
    }
    let n = sites.len();
    if n > 3 && n <= CATALOGUE_FULL_SUPPORT {
        push(&mut out, "all plus".into(), LocalFunction::all_plus_indicator(dim, sites.iter().copied()));
    }
    if n > 1 && n <= CATALOGUE_FULL_SUPPORT {
        push(&mut out, "magnetization".into(), LocalFunction::magnetization(region));
        for t in 0..=n {
            let thr = 2 * t as i64 - n as i64;
            push(
                &mut out,
                format!("magnetization >= {thr}"),
                LocalFunction::from_fn(region.clone(), |s| {
                    if s.iter().map(|&v| v as i64).sum::<i64>() >= thr {
                        1.0
                    } else {
                        0.0
                    }
                }),
            );
        }
    }
    out
}

#[derive(Clone, Debug)]
pub enum MonotonicityVerdict {
    Preserving {
        row_pairs: u64,
        /// True when every increasing event was checked, false for the catalogue.
        exhaustive: bool,
    },
    Violating {
        event: IncreasingEvent,
        lower_row: u64,
        upper_row: u64,
        lower_value: f64,
        upper_value: f64,
    },
}

impl MonotonicityVerdict {
    pub fn is_preserving(&self) -> bool {
        matches!(self, MonotonicityVerdict::Preserving { .. })
    }
}

/// Checks `γ_Λ(A|ω) ≤ γ_Λ(A|σ)` for every covering pair of rows `ω ≤ σ`
/// (sufficient by transitivity) and every increasing event `A`.
pub fn monotonicity_check(table: &KernelTable) -> MonotonicityVerdict {
    let vol = table.volume();
    let n = vol.len();
    let nd = table.dependence_set().len();
    let catalogue = if n > FULL_ENUMERATION_SITES { increasing_catalogue(vol) } else { Vec::new() };
    let mut pairs = 0u64;
    for lo in 0u64..(1 << nd) {
        for j in 0..nd {
            if lo >> j & 1 == 1 {
                continue;
            }
            let hi = lo | 1 << j;
            pairs += 1;
            let (a, b) = (table.row(lo), table.row(hi));
            if n <= FULL_ENUMERATION_SITES {
                let d: Vec<f64> = a.probs().iter().zip(b.probs()).map(|(x, y)| x - y).collect();
                let (gap, mask) = max_upset_gap(&d, n);
                if gap > MONOTONE_TOLERANCE {
                    let event = IncreasingEvent::from_mask(vol, mask);
                    let lv = a.expectation(&event.function).expect("support is the volume");
                    let uv = b.expectation(&event.function).expect("support is the volume");
                    return MonotonicityVerdict::Violating { event, lower_row: lo, upper_row: hi, lower_value: lv, upper_value: uv };
                }
            } else {
                for ev in &catalogue {
                    let lv = a.expectation(&ev.function).expect("catalogue lives on the volume");
                    let uv = b.expectation(&ev.function).expect("catalogue lives on the volume");
                    if lv > uv + MONOTONE_TOLERANCE {
                        return MonotonicityVerdict::Violating {
                            event: ev.clone(),
                            lower_row: lo,
                            upper_row: hi,
                            lower_value: lv,
                            upper_value: uv,
                        };
                    }
                }
            }
        }
    }
    MonotonicityVerdict::Preserving { row_pairs: pairs, exhaustive: n <= FULL_ENUMERATION_SITES }
}

#[derive(Clone, Debug, Default)]
pub struct DominationVerdict {
    pub dominated: bool,
    pub exhaustive: bool,
    pub events_checked: u64,
    /// Largest `lower(A) − upper(A)` found.
    pub max_violation: f64,
    pub witness: Option<String>,
}

/// Whether `lower ≼ upper` in the stochastic order on a common support.
pub fn stochastic_domination(lower: &FiniteMeasure, upper: &FiniteMeasure) -> Result<DominationVerdict> {
    if lower.support().sites() != upper.support().sites() {
        return invalid("domination needs a common support");
    }
    let n = lower.support().len();
    if n <= FULL_ENUMERATION_SITES {
        let d: Vec<f64> = lower.probs().iter().zip(upper.probs()).map(|(x, y)| x - y).collect();
        let (gap, mask) = max_upset_gap(&d, n);
        let events = if n <= 5 { upsets(n).len() as u64 } else { nested_pairs_5().len() as u64 };
        return Ok(DominationVerdict {
            dominated: gap <= MONOTONE_TOLERANCE,
            exhaustive: true,
            events_checked: events,
            max_violation: gap,
            witness: (gap > MONOTONE_TOLERANCE).then(|| format!("up-set {mask:#x}")),
        });
    }
    let mut v = DominationVerdict { dominated: true, exhaustive: false, max_violation: f64::NEG_INFINITY, ..Default::default() };
    for ev in increasing_catalogue(lower.support()) {
        let gap = lower.expectation(&ev.function)? - upper.expectation(&ev.function)?;
        v.events_checked += 1;
        if gap > v.max_violation {
            v.max_violation = gap;
            if gap > MONOTONE_TOLERANCE {
                v.dominated = false;
                v.witness = Some(ev.description.clone());
            }
        }
    }
    Ok(v)
}

#[derive(Clone, Debug, Default)]
pub struct SandwichReport {
    pub checks: u64,
    pub violations: u64,
    pub max_violation: f64,
}

/// `γ_Λ(f|ω_S −_{S^c}) ≤ γ_Λ(f|ω) ≤ γ_Λ(f|ω_S +_{S^c})` for every `f` and `ω`
/// given; `S` defaults to `Λ`.
pub fn sandwich_check(
    recipe: &dyn KernelRecipe,
    lambda: &Region,
    fs: &[LocalFunction],
    omegas: &[TailedConfiguration],
    s: Option<&Region>,
) -> Result<SandwichReport> {
    let s = s.unwrap_or(lambda);
    let dim = lambda.dim();
    let fill = |sign: Spin| TailedConfiguration::uniform(dim, Tail::constant(sign));
    let mut r = SandwichReport::default();
    for omega in omegas {
        let lo_b = omega.with_exterior(s, &fill(MINUS));
        let hi_b = omega.with_exterior(s, &fill(PLUS));
        let k_lo = recipe.kernel(lambda, &lo_b)?;
        let k_mid = recipe.kernel(lambda, omega)?;
        let k_hi = recipe.kernel(lambda, &hi_b)?;
        for f in fs {
            let a = k_lo.expectation_with(f, &lo_b);
            let b = k_mid.expectation_with(f, omega);
            let c = k_hi.expectation_with(f, &hi_b);
            r.checks += 1;
            let v = (a - b).max(b - c);
            if v > r.max_violation {
                r.max_violation = v;
            }
            if v > MONOTONE_TOLERANCE {
                r.violations += 1;
            }
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedekind_numbers() {
        let want = [2, 3, 6, 20, 168, 7581];
        for (n, &w) in want.iter().enumerate() {
            assert_eq!(upsets(n).len(), w);
        }
        assert_eq!(nested_pairs_5().len(), 7_828_354);
    }

    #[test]
    fn upsets_are_upward_closed() {
        for &a in upsets(4) {
            for c in 0..16u64 {
                if a >> c & 1 == 1 {
                    for j in 0..4 {
                        assert_eq!(a >> (c | 1 << j) & 1, 1);
                    }
                }
            }
        }
    }
}
