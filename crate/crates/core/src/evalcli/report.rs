use std::fmt::Write as _;

use serde::Serialize;

pub const SIZE_CSV_HEADER: &str = "split,size,episodes,reward,success,failure";
pub const DISTANCE_CSV_HEADER: &str =
    "# bins: integer BFS distance from the indicator to the correct goal\ndistance,visits,correct,precision";

/// Aggregates for one map size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeRow {
    pub size: usize,
    pub episodes: usize,
    pub reward: f64,
    pub success: f64,
    pub failure: f64,
}

/// Goal visits at one indicator-to-goal distance. Bins without visits are
/// not reported.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceBin {
    pub distance: usize,
    pub visits: usize,
    pub correct: usize,
}

impl DistanceBin {
    pub fn precision(&self) -> f64 {
        self.correct as f64 / self.visits as f64
    }
}

/// Average reward and success / failure rates over a split. Success and
/// failure count correctly and incorrectly completed episodes; timeouts
/// count as neither.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub split: String,
    pub episodes: usize,
    pub reward: f64,
    pub success: f64,
    pub failure: f64,
    pub sizes: Vec<SizeRow>,
    pub distances: Vec<DistanceBin>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "split: {}", self.split);
        let _ = writeln!(s, "episodes: {}", self.episodes);
        let _ = writeln!(s, "average reward: {:.4}", self.reward);
        let _ = writeln!(s, "success rate: {:.4}", self.success);
        let _ = writeln!(s, "failure rate: {:.4}", self.failure);
        if !self.sizes.is_empty() {
            let _ = writeln!(s, "size  episodes  reward   success  failure");
            for r in &self.sizes {
                let _ = writeln!(
                    s,
                    "{:<5} {:<9} {:<8.4} {:<8.4} {:.4}",
                    r.size, r.episodes, r.reward, r.success, r.failure
                );
            }
        }
        if !self.distances.is_empty() {
            let _ = writeln!(s, "distance  visits  precision");
            for b in &self.distances {
                let _ = writeln!(s, "{:<9} {:<7} {:.4}", b.distance, b.visits, b.precision());
            }
        }
        s
    }

    /// Per-size rows, one line per size, under [`SIZE_CSV_HEADER`].
    pub fn sizes_csv(&self) -> String {
        let mut s = format!("{SIZE_CSV_HEADER}\n");
        for r in &self.sizes {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                self.split, r.size, r.episodes, r.reward, r.success, r.failure
            );
        }
        s
    }

    pub fn distances_csv(&self) -> String {
        let mut s = format!("{DISTANCE_CSV_HEADER}\n");
        for b in &self.distances {
            let _ = writeln!(s, "{},{},{},{}", b.distance, b.visits, b.correct, b.precision());
        }
        s
    }
}
