//! Size-based replication-profile optimization.
//!
//! Minimizes the expected service time of a job over per-size replica-count
//! distributions, subject to the steady-state capacity constraint that the
//! expected number of busy servers stays within a slack target. Because the
//! constraint is a single scalar coupling, the problem decomposes: for a
//! fixed multiplier `y` the best profile picks, independently for every task
//! size, the replica count minimizing `objective + y * capacity`. A scalar
//! bisection on `y` then drives the aggregate capacity to the target, and
//! tied sizes are mixed to make the constraint exactly tight.

mod profile;

pub use profile::ReplicationProfile;

use crate::model::OrderStatTable;
use crate::{Error, Result};

/// Default tie tolerance for argmin sets: below quadrature noise would
/// create spurious ties, above would miss true ones.
pub const TIE_EPSILON: f64 = 1e-9;

/// Solver knobs.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Right-hand side of the capacity constraint (1 for the unperturbed
    /// problem, `1 - n^(alpha-1)` when sized for a finite system).
    pub slack_target: f64,
    /// Initial replica-count cap; escalates by doubling when the argmin
    /// lands on it.
    pub r_max: u32,
    /// Hard ceiling for the escalation.
    pub r_max_cap: u32,
    pub y_bracket: (f64, f64),
    pub y_tol: f64,
    pub tie_epsilon: f64,
}

impl SolveOptions {
    pub fn new(k: u32) -> Self {
        Self {
            slack_target: 1.0,
            r_max: 10 * k + 50,
            r_max_cap: 1024 * k,
            y_bracket: (1e-6, 1e3),
            y_tol: 1e-10,
            tie_epsilon: TIE_EPSILON,
        }
    }

    pub fn with_slack(mut self, slack: f64) -> Self {
        self.slack_target = slack;
        self
    }

    pub fn with_r_max(mut self, r_max: u32) -> Self {
        self.r_max = r_max;
        self
    }
}

/// A solved instance: the profile plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct Solution {
    pub profile: ReplicationProfile,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub warnings: Vec<String>,
}

/// The dual function evaluated at one multiplier: the per-size argmin sets
/// and the dual objective value for a capacity target.
#[derive(Debug, Clone)]
pub struct DualPoint {
    pub y: f64,
    /// Minimizing replica counts per grid point, within [`TIE_EPSILON`].
    pub argmin: Vec<Vec<u32>>,
    pub value: f64,
}

/// Evaluate the dual at `y > 0` over a grid.
pub fn dual_point(
    table: &OrderStatTable,
    k: u32,
    lambda: f64,
    grid: &[(f64, f64)],
    y: f64,
    r_max: u32,
    target: f64,
) -> Result<DualPoint> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("dual multiplier must be positive, got {y}")));
    }
    let mut argmin = Vec::with_capacity(grid.len());
    let mut value = 0.0;
    for &(x, w) in grid {
        let set = argmin_r(table, k, lambda, x, y, r_max, TIE_EPSILON)?;
        let best = dual_integrand(table, k, lambda, x, y, set[0])?;
        // dual_integrand carries a unit target; re-aim at the requested one
        value += w * x * (best + y * (1.0 - target));
        argmin.push(set);
    }
    Ok(DualPoint { y, argmin, value })
}

/// `1 + E[S_(k:r) | X=x]`: expected service time per unit task size of an
/// `r`-replica batch.
pub fn objective_term(table: &OrderStatTable, k: u32, r: u32, x: f64) -> Result<f64> {
    Ok(1.0 + table.mean(k, r, x)?)
}

/// `r + (r-k) E[S_(k:r)|x] + sum_{i<=k} E[S_(i:r)|x]`: expected server time
/// per unit task size of an `r`-replica batch (the k finishers run to their
/// own completions, the rest run until the k-th one finishes).
pub fn capacity_bracket(table: &OrderStatTable, k: u32, r: u32, x: f64) -> Result<f64> {
    let kth = table.mean(k, r, x)?;
    let mut sum = 0.0;
    for i in 1..=k {
        sum += table.mean(i, r, x)?;
    }
    Ok(r as f64 + (r - k) as f64 * kth + sum)
}

/// Expected service time of a typical job under `profile`:
/// `sum_j w_j x_j sum_r p_r(x_j) (1 + E[S_(k:r)|x_j])`.
pub fn objective(profile: &ReplicationProfile, table: &OrderStatTable) -> Result<f64> {
    let mut total = 0.0;
    for ((x, w), row) in profile.grid.iter().zip(&profile.rows) {
        for &(r, p) in row {
            total += w * x * p * objective_term(table, profile.k, r, *x)?;
        }
    }
    Ok(total)
}

/// Left-hand side of the capacity constraint under `profile`:
/// `(lambda/k) sum_j w_j x_j sum_r p_r(x_j) * capacity_bracket`.
pub fn capacity(profile: &ReplicationProfile, table: &OrderStatTable, lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for ((x, w), row) in profile.grid.iter().zip(&profile.rows) {
        for &(r, p) in row {
            total += w * x * p * capacity_bracket(table, profile.k, r, *x)?;
        }
    }
    Ok(total * lambda / profile.k as f64)
}

/// Per-size integrand of the dual function at multiplier `y` (excluding the
/// outer `x` weight): `objective_term + y * (capacity_term - 1)`. For k = 1
/// this is `(1 + E[S_(1:r)|x])(1 + y lambda r) - y`.
pub fn dual_integrand(
    table: &OrderStatTable,
    k: u32,
    lambda: f64,
    x: f64,
    y: f64,
    r: u32,
) -> Result<f64> {
    let obj = objective_term(table, k, r, x)?;
    let cap = lambda / k as f64 * capacity_bracket(table, k, r, x)?;
    Ok(obj + y * (cap - 1.0))
}

/// All replica counts within `tie_epsilon` of minimizing the dual integrand
/// at `(x, y)`, by full scan over `[k, r_max]`.
///
/// Errors when the minimum sits on the cap, since the true argmin may lie
/// beyond it.
pub fn argmin_r(
    table: &OrderStatTable,
    k: u32,
    lambda: f64,
    x: f64,
    y: f64,
    r_max: u32,
    tie_epsilon: f64,
) -> Result<Vec<u32>> {
    if r_max < k {
        return Err(Error::Domain(format!("r_max={r_max} below k={k}")));
    }
    let mut best = f64::INFINITY;
    let mut values = Vec::with_capacity((r_max - k + 1) as usize);
    for r in k..=r_max {
        let v = dual_integrand(table, k, lambda, x, y, r)?;
        values.push(v);
        if v < best {
            best = v;
        }
    }
    let set: Vec<u32> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= best + tie_epsilon)
        .map(|(i, _)| k + i as u32)
        .collect();
    if set.last() == Some(&r_max) {
        return Err(Error::RMaxTooSmall { r_max });
    }
    Ok(set)
}

/// Numerical check that `r * E[S_(1:r)|x]` has nonnegative second
/// differences over the grid; the sharp two-consecutive-integer structure of
/// optimal profiles relies on it.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    pub violations: Vec<ConvexityViolation>,
    pub min_second_difference: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvexityViolation {
    pub x: f64,
    pub r: u32,
    pub second_difference: f64,
}

impl ConvexityReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

const CONVEXITY_TOL: f64 = -1e-9;

/// Evaluate the convexity check from a table of values `values[j][i] =
/// E[min of (i+1) draws | X = x_j]`.
pub fn convexity_report_from_values(xs: &[f64], values: &[Vec<f64>]) -> ConvexityReport {
    let mut violations = Vec::new();
    let mut min_dd = f64::INFINITY;
    for (j, row) in values.iter().enumerate() {
        let h: Vec<f64> = row.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).collect();
        for i in 1..h.len().saturating_sub(1) {
            let dd = h[i + 1] - 2.0 * h[i] + h[i - 1];
            min_dd = min_dd.min(dd);
            if dd < CONVEXITY_TOL {
                violations.push(ConvexityViolation {
                    x: xs[j],
                    r: (i + 1) as u32,
                    second_difference: dd,
                });
            }
        }
    }
    ConvexityReport { violations, min_second_difference: min_dd }
}

/// Run the convexity check against a slowdown model on a grid of sizes for
/// `r` in `1..=r_hi`.
pub fn check_assumption_convexity(
    table: &OrderStatTable,
    xs: &[f64],
    r_hi: u32,
) -> Result<ConvexityReport> {
    let mut values = Vec::with_capacity(xs.len());
    for &x in xs {
        let row: Result<Vec<f64>> = (1..=r_hi).map(|r| table.mean(1, r, x)).collect();
        values.push(row?);
    }
    Ok(convexity_report_from_values(xs, &values))
}

struct Tables {
    k: u32,
    /// `obj[j][i]`, `cap[j][i]` for `r = k + i`; `cap` includes the
    /// `lambda/k` factor but not the `w x` weight.
    obj: Vec<Vec<f64>>,
    cap: Vec<Vec<f64>>,
    wx: Vec<f64>,
}

impl Tables {
    fn build(
        table: &OrderStatTable,
        k: u32,
        lambda: f64,
        grid: &[(f64, f64)],
        r_max: u32,
    ) -> Result<Self> {
        let mut obj = Vec::with_capacity(grid.len());
        let mut cap = Vec::with_capacity(grid.len());
        let mut wx = Vec::with_capacity(grid.len());
        for &(x, w) in grid {
            let mut orow = Vec::with_capacity((r_max - k + 1) as usize);
            let mut crow = Vec::with_capacity((r_max - k + 1) as usize);
            for r in k..=r_max {
                orow.push(objective_term(table, k, r, x)?);
                crow.push(lambda / k as f64 * capacity_bracket(table, k, r, x)?);
            }
            obj.push(orow);
            cap.push(crow);
            wx.push(w * x);
        }
        Ok(Self { k, obj, cap, wx })
    }

    /// Per-size argmin of `obj + y cap`; returns `(lo, hi)` indices of the
    /// tie set and whether the minimum touches the cap.
    fn argmin(&self, j: usize, y: f64, tie_eps: f64) -> (usize, usize, bool) {
        let orow = &self.obj[j];
        let crow = &self.cap[j];
        let mut best = f64::INFINITY;
        for i in 0..orow.len() {
            let v = orow[i] + y * crow[i];
            if v < best {
                best = v;
            }
        }
        let mut lo = usize::MAX;
        let mut hi = 0;
        for i in 0..orow.len() {
            let v = orow[i] + y * crow[i];
            if v <= best + tie_eps {
                if lo == usize::MAX {
                    lo = i;
                }
                hi = i;
            }
        }
        (lo, hi, hi + 1 == orow.len())
    }

    /// Per-size argmin profile; `capped` marks that some size's minimum sat
    /// on the replica cap, meaning the true argmin may lie beyond it (and
    /// the profile certainly uses more capacity than any interior optimum).
    fn choices(&self, y: f64, tie_eps: f64, take_hi: bool) -> (Vec<usize>, bool) {
        let mut out = Vec::with_capacity(self.wx.len());
        let mut any_capped = false;
        for j in 0..self.wx.len() {
            let (lo, hi, capped) = self.argmin(j, y, tie_eps);
            any_capped |= capped;
            out.push(if take_hi { hi } else { lo });
        }
        (out, any_capped)
    }

    /// Capacity of the per-size argmin profile, infinite when the argmin is
    /// cut off by the replica cap.
    fn capacity_at(&self, y: f64, tie_eps: f64, take_hi: bool) -> f64 {
        let (choices, capped) = self.choices(y, tie_eps, take_hi);
        if capped {
            return f64::INFINITY;
        }
        self.total_capacity(&choices)
    }

    fn total_capacity(&self, choices: &[usize]) -> f64 {
        choices.iter().enumerate().map(|(j, &i)| self.wx[j] * self.cap[j][i]).sum()
    }

    fn dual_value(&self, y: f64, target: f64) -> f64 {
        let mut total = 0.0;
        for j in 0..self.wx.len() {
            let orow = &self.obj[j];
            let crow = &self.cap[j];
            let mut best = f64::INFINITY;
            for i in 0..orow.len() {
                best = best.min(orow[i] + y * crow[i]);
            }
            total += self.wx[j] * best;
        }
        total - y * target
    }

    fn r_of(&self, idx: usize) -> u32 {
        self.k + idx as u32
    }
}

/// Solve the replication-profile problem on a finite size grid.
///
/// Finds the multiplier `y*` by bisection (the capacity used by the
/// per-size argmin profile is nonincreasing in `y`), then recovers a primal
/// profile, mixing two replica counts where needed so the aggregate
/// capacity hits the slack target exactly.
pub fn solve(
    lambda: f64,
    k: u32,
    table: &OrderStatTable,
    grid: &[(f64, f64)],
    opts: &SolveOptions,
) -> Result<Solution> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("empty optimization grid".into()));
    }
    let wsum: f64 = grid.iter().map(|(_, w)| w).sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!("grid weights sum to {wsum}, expected 1")));
    }
    if !(opts.slack_target > 0.0) {
        return Err(Error::InvalidParams(format!("slack target must be positive, got {}", opts.slack_target)));
    }
    let mu = table.model().mu();
    let mean_x: f64 = grid.iter().map(|(x, w)| x * w).sum();
    // Minimal capacity is attained by the no-redundancy profile and equals
    // lambda (1 + 1/mu) E[X] regardless of the slowdown model.
    let min_capacity = lambda * (1.0 + 1.0 / mu) * mean_x;
    if min_capacity > opts.slack_target {
        return Err(Error::Infeasible {
            lambda,
            threshold: opts.slack_target / ((1.0 + 1.0 / mu) * mean_x),
            slack: opts.slack_target,
        });
    }

    let mut r_max = opts.r_max.max(k + 1);
    loop {
        match solve_at_cap(lambda, k, table, grid, opts, r_max) {
            Err(Error::RMaxTooSmall { .. }) if r_max < opts.r_max_cap => {
                r_max = (r_max * 2).min(opts.r_max_cap);
            }
            other => return other,
        }
    }
}

fn solve_at_cap(
    lambda: f64,
    k: u32,
    table: &OrderStatTable,
    grid: &[(f64, f64)],
    opts: &SolveOptions,
    r_max: u32,
) -> Result<Solution> {
    let tables = Tables::build(table, k, lambda, grid, r_max)?;
    let target = opts.slack_target;
    let tie = opts.tie_epsilon;
    let mut warnings = Vec::new();

    if k == 1 {
        let xs: Vec<f64> = grid.iter().map(|&(x, _)| x).collect();
        let report = check_assumption_convexity(table, &xs, r_max.min(3 * k + 20))?;
        if !report.holds() {
            warnings.push(format!(
                "r*E[min] is not convex in r on this model ({} grid violations, worst {:.3e}); \
                 the two-consecutive-support guarantee is downgraded to a best-effort check",
                report.violations.len(),
                report.min_second_difference
            ));
        }
    }

    let (mut y_lo, mut y_hi) = opts.y_bracket;
    if !(y_lo > 0.0 && y_hi > y_lo) {
        return Err(Error::InvalidParams(format!("bad multiplier bracket ({y_lo}, {y_hi})")));
    }

    // The multiplier prices capacity: tiny y replicates maximally. If even
    // that fits under the target, the constraint is slack at the optimum.
    if tables.capacity_at(y_lo, tie, true) <= target {
        let (lo_choices, _) = tables.choices(y_lo, tie, true);
        let rows = lo_choices.iter().map(|&i| vec![(tables.r_of(i), 1.0)]).collect();
        return finish(
            lambda, k, table, grid, opts, r_max, rows, y_lo, true, warnings, &tables,
        );
    }
    // Expand upward until the cheapest argmin profile fits.
    while tables.capacity_at(y_hi, tie, false) > target {
        y_hi *= 2.0;
        if y_hi > 1e12 {
            return Err(Error::Numerical {
                what: "multiplier bracket exhausted without meeting the capacity target".into(),
                achieved: y_hi,
            });
        }
    }

    // Bisection on "capacity of the low-capacity argmin profile <= target";
    // capped argmins count as infinite capacity, so the bracket keeps the
    // converged multiplier inside the cap.
    while y_hi - y_lo > opts.y_tol * y_hi.max(1.0) {
        let mid = 0.5 * (y_lo + y_hi);
        if tables.capacity_at(mid, tie, false) <= target {
            y_hi = mid;
        } else {
            y_lo = mid;
        }
    }
    let y_star = y_hi;

    // Base profile: low-capacity choice at y*; feasible by construction.
    let (base, base_capped) = tables.choices(y_star, tie, false);
    // A capped argmin on either side of the collapsed bracket means the
    // crossing involves replica counts beyond the cap.
    let (infeasible_side, infeasible_capped) = tables.choices(y_lo, tie, false);
    if base_capped || infeasible_capped {
        return Err(Error::RMaxTooSmall { r_max });
    }
    let mut cap_total = tables.total_capacity(&base);
    let mut theta: Vec<Option<(usize, f64)>> = vec![None; base.len()];

    // Mix toward the high-capacity alternative at tied sizes (or, absent
    // ties, toward the infeasible-side choice across the collapsed bracket)
    // until the constraint is tight. Any split among tied sizes yields the
    // same objective, so fill in grid order.
    if target - cap_total > 1e-12 {
        let mut need = target - cap_total;
        for j in 0..base.len() {
            let (_, hi_tie, _) = tables.argmin(j, y_star, tie);
            let alt = if hi_tie > base[j] { hi_tie } else { infeasible_side[j] };
            if alt <= base[j] {
                continue;
            }
            let room = tables.wx[j] * (tables.cap[j][alt] - tables.cap[j][base[j]]);
            if room <= 0.0 {
                continue;
            }
            let frac = (need / room).min(1.0);
            theta[j] = Some((alt, frac));
            need -= frac * room;
            if need <= 1e-12 {
                break;
            }
        }
        cap_total = target - need.max(0.0);
    }

    let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(base.len());
    for (j, &b) in base.iter().enumerate() {
        match theta[j] {
            Some((alt, frac)) if frac >= 1.0 => rows.push(vec![(tables.r_of(alt), 1.0)]),
            Some((alt, frac)) if frac > 0.0 => rows.push(vec![
                (tables.r_of(b), 1.0 - frac),
                (tables.r_of(alt), frac),
            ]),
            _ => rows.push(vec![(tables.r_of(b), 1.0)]),
        }
    }
    let strictly_below = (target - cap_total).abs() > 1e-8;
    finish(lambda, k, table, grid, opts, r_max, rows, y_star, strictly_below, warnings, &tables)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    lambda: f64,
    k: u32,
    table: &OrderStatTable,
    grid: &[(f64, f64)],
    opts: &SolveOptions,
    r_max: u32,
    rows: Vec<Vec<(u32, f64)>>,
    y_star: f64,
    strictly_below: bool,
    mut warnings: Vec<String>,
    tables: &Tables,
) -> Result<Solution> {
    for (j, row) in rows.iter().enumerate() {
        let support: Vec<u32> = row.iter().filter(|(_, p)| *p > 0.0).map(|&(r, _)| r).collect();
        if support.len() > 2 || (support.len() == 2 && support[1] != support[0] + 1) {
            warnings.push(format!(
                "row {} (x={}) has support {:?}, not two consecutive replica counts",
                j, grid[j].0, support
            ));
        }
    }
    let mut profile = ReplicationProfile {
        k,
        grid: grid.to_vec(),
        rows,
        objective_value: 0.0,
        capacity_usage: 0.0,
        dual_y: y_star,
        slack_target: opts.slack_target,
        r_max,
        capacity_strictly_below: strictly_below,
    };
    profile.objective_value = objective(&profile, table)?;
    profile.capacity_usage = capacity(&profile, table, lambda)?;
    profile.validate()?;
    let dual_value = tables.dual_value(y_star, opts.slack_target);
    let duality_gap = (profile.objective_value - dual_value).abs();
    if duality_gap > 1e-6 {
        return Err(Error::Numerical {
            what: "primal objective does not meet the dual value".into(),
            achieved: duality_gap,
        });
    }
    Ok(Solution { profile, dual_value, duality_gap, warnings })
}
