use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Per-task-size distribution over replica counts: the decision variable of
/// the size-based replication problem and the routing kernel of the
/// size-based policies.
///
/// Rows are sparse `(r, probability)` pairs over `r >= k`, at most a handful
/// of entries each (optimal solutions concentrate on one or two consecutive
/// replica counts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationProfile {
    pub k: u32,
    /// Ascending `(x, weight)` grid; weights sum to 1.
    pub grid: Vec<(f64, f64)>,
    /// One sparse distribution over replica counts per grid point.
    pub rows: Vec<Vec<(u32, f64)>>,
    pub objective_value: f64,
    pub capacity_usage: f64,
    pub dual_y: f64,
    pub slack_target: f64,
    pub r_max: u32,
    /// Set when no mixing point could make the capacity constraint tight; the
    /// profile then uses strictly less capacity than the target.
    pub capacity_strictly_below: bool,
}

impl ReplicationProfile {
    pub fn validate(&self) -> Result<()> {
        if self.grid.len() != self.rows.len() {
            return Err(Error::InvalidParams(format!(
                "profile has {} grid points but {} rows",
                self.grid.len(),
                self.rows.len()
            )));
        }
        let wsum: f64 = self.grid.iter().map(|(_, w)| w).sum();
        if (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("profile grid weights sum to {wsum}")));
        }
        for (j, row) in self.rows.iter().enumerate() {
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParams(format!(
                    "profile row {j} sums to {total}, expected 1"
                )));
            }
            for &(r, p) in row {
                if r < self.k || r > self.r_max {
                    return Err(Error::InvalidParams(format!(
                        "profile row {j} puts mass on r={r} outside [{}, {}]",
                        self.k, self.r_max
                    )));
                }
                if !(0.0..=1.0 + 1e-12).contains(&p) {
                    return Err(Error::InvalidParams(format!("profile row {j} has probability {p}")));
                }
            }
        }
        Ok(())
    }

    /// Largest replica count carrying mass.
    pub fn max_support(&self) -> u32 {
        self.rows
            .iter()
            .flat_map(|row| row.iter().filter(|(_, p)| *p > 0.0).map(|(r, _)| *r))
            .max()
            .unwrap_or(self.k)
    }

    /// Expected replica count per grid point.
    pub fn expected_replicas(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(r, p)| r as f64 * p).sum())
            .collect()
    }

    /// Serialize as CSV with a one-line JSON header comment:
    /// `# {"objective":..,"capacity":..,"dual_y":..,"slack":..,"r_max":..}`
    /// followed by `x,weight,r,probability` rows.
    pub fn to_csv(&self) -> String {
        let header = serde_json::json!({
            "objective": self.objective_value,
            "capacity": self.capacity_usage,
            "dual_y": self.dual_y,
            "slack": self.slack_target,
            "r_max": self.r_max,
            "k": self.k,
            "capacity_strictly_below": self.capacity_strictly_below,
        });
        let mut out = format!("# {header}\nx,weight,r,probability\n");
        for ((x, w), row) in self.grid.iter().zip(&self.rows) {
            for &(r, p) in row {
                out.push_str(&format!("{x},{w},{r},{p}\n"));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut meta: Option<serde_json::Value> = None;
        let mut grid: Vec<(f64, f64)> = Vec::new();
        let mut rows: Vec<Vec<(u32, f64)>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if meta.is_none() {
                    meta = Some(serde_json::from_str(rest.trim()).map_err(|e| {
                        Error::Parse(format!("profile header line {}: {e}", lineno + 1))
                    })?);
                }
                continue;
            }
            if line.starts_with('x') {
                continue; // column header
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!(
                    "profile line {}: expected 4 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("profile line {}: bad {what}: {e}", lineno + 1)))
            };
            let x = parse(fields[0], "x")?;
            let w = parse(fields[1], "weight")?;
            let r = parse(fields[2], "r")? as u32;
            let p = parse(fields[3], "probability")?;
            match grid.last() {
                Some(&(gx, _)) if gx == x => rows.last_mut().unwrap().push((r, p)),
                _ => {
                    grid.push((x, w));
                    rows.push(vec![(r, p)]);
                }
            }
        }
        let meta = meta.ok_or_else(|| Error::Parse("profile is missing its JSON header line".into()))?;
        let get = |key: &str| -> Result<f64> {
            meta.get(key)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Error::Parse(format!("profile header is missing {key}")))
        };
        let profile = Self {
            k: get("k")? as u32,
            grid,
            rows,
            objective_value: get("objective")?,
            capacity_usage: get("capacity")?,
            dual_y: get("dual_y")?,
            slack_target: get("slack")?,
            r_max: get("r_max")? as u32,
            capacity_strictly_below: meta
                .get("capacity_strictly_below")
                .and_then(|v| v.as_bool())
                .unwrap_or(false),
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Row index whose grid point is closest to `x`.
    pub fn nearest_row(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, &(gx, _)) in self.grid.iter().enumerate() {
            let d = (gx - x).abs();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_profile() -> ReplicationProfile {
        ReplicationProfile {
            k: 1,
            grid: vec![(0.5, 0.5), (1.5, 0.5)],
            rows: vec![vec![(3, 1.0)], vec![(1, 0.25), (2, 0.75)]],
            objective_value: 1.4,
            capacity_usage: 1.0,
            dual_y: 0.66,
            slack_target: 1.0,
            r_max: 60,
            capacity_strictly_below: false,
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = sample_profile();
        let text = p.to_csv();
        let q = ReplicationProfile::from_csv(&text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn validates_row_sums() {
        let mut p = sample_profile();
        p.rows[1] = vec![(1, 0.3), (2, 0.3)];
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_missing_header() {
        assert!(ReplicationProfile::from_csv("x,weight,r,probability\n1,1,1,1\n").is_err());
    }
}
