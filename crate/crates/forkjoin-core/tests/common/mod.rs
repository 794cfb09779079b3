//! Shared test oracles.
#![allow(dead_code)]

use forkjoin_core::model::OrderStatTable;
use forkjoin_core::optimizer::{capacity_bracket, objective_term};

/// Dense objective/capacity tables for the finite replication LP:
/// entry `i` corresponds to replica count `k + i`.
pub struct LpTables {
    pub obj: Vec<Vec<f64>>,
    pub cap: Vec<Vec<f64>>,
    pub wx: Vec<f64>,
}

pub fn lp_tables(
    table: &OrderStatTable,
    k: u32,
    lambda: f64,
    grid: &[(f64, f64)],
    r_max: u32,
) -> LpTables {
    let mut obj = Vec::new();
    let mut cap = Vec::new();
    let mut wx = Vec::new();
    for &(x, w) in grid {
        let mut orow = Vec::new();
        let mut crow = Vec::new();
        for r in k..=r_max {
            orow.push(objective_term(table, k, r, x).unwrap());
            crow.push(lambda / k as f64 * capacity_bracket(table, k, r, x).unwrap());
        }
        obj.push(orow);
        cap.push(crow);
        wx.push(w * x);
    }
    LpTables { obj, cap, wx }
}

/// Exhaustive vertex enumeration of the grid LP: every pure per-size
/// replica-count assignment, plus every single-coordinate mixture that makes
/// the capacity constraint exactly tight. Vertices of an LP with one
/// coupling constraint and per-size simplexes have at most one fractional
/// coordinate, so this sweep contains an optimum.
pub fn brute_force_lp(t: &LpTables, target: f64) -> f64 {
    let m = t.wx.len();
    let width = t.obj[0].len();
    let mut choice = vec![0usize; m];
    let mut best = f64::INFINITY;
    loop {
        let mut obj_tot = 0.0;
        let mut cap_tot = 0.0;
        for j in 0..m {
            obj_tot += t.wx[j] * t.obj[j][choice[j]];
            cap_tot += t.wx[j] * t.cap[j][choice[j]];
        }
        if cap_tot <= target + 1e-12 {
            if obj_tot < best {
                best = obj_tot;
            }
        } else {
            // mix one coordinate down to tightness
            for j in 0..m {
                let cur = choice[j];
                for alt in 0..width {
                    let dcap = t.wx[j] * (t.cap[j][alt] - t.cap[j][cur]);
                    if dcap < 0.0 {
                        let theta = (cap_tot - target) / (-dcap);
                        if theta <= 1.0 {
                            let dobj = t.wx[j] * (t.obj[j][alt] - t.obj[j][cur]);
                            let v = obj_tot + theta * dobj;
                            if v < best {
                                best = v;
                            }
                        }
                    }
                }
            }
        }
        // odometer
        let mut j = 0;
        loop {
            if j == m {
                return best;
            }
            if choice[j] + 1 < width {
                choice[j] += 1;
                break;
            }
            choice[j] = 0;
            j += 1;
        }
    }
}

/// OLS slope t-statistic of batch means over a sampled time series.
pub fn slope_t_statistic(samples: &[(f64, f64)], batches: usize) -> f64 {
    let per = samples.len() / batches;
    assert!(per >= 1, "need at least {batches} samples");
    let ys: Vec<f64> = (0..batches)
        .map(|b| samples[b * per..(b + 1) * per].iter().map(|(_, v)| v).sum::<f64>() / per as f64)
        .collect();
    let n = batches as f64;
    let xbar = (n - 1.0) / 2.0;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = (0..batches).map(|b| (b as f64 - xbar).powi(2)).sum();
    let sxy: f64 = ys.iter().enumerate().map(|(b, y)| (b as f64 - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let sse: f64 = ys
        .iter()
        .enumerate()
        .map(|(b, y)| {
            let fit = ybar + slope * (b as f64 - xbar);
            (y - fit).powi(2)
        })
        .sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    if se == 0.0 {
        0.0
    } else {
        slope / se
    }
}
