//! Bundled example programs and their expected analysis verdicts.

/// One bundled benchmark with its expected (analysis output) and actual
/// (ground truth) verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkEntry {
    pub name: &'static str,
    pub file: &'static str,
    pub source: &'static str,
    pub mc: bool,
    pub up: bool,
    pub actual_mc: bool,
    pub actual_up: bool,
}

impl BenchmarkEntry {
    pub fn bounded(&self) -> bool {
        self.mc && self.up
    }

    pub fn actual_bounded(&self) -> bool {
        self.actual_mc && self.actual_up
    }
}

macro_rules! entry {
    ($name:expr, $file:expr, $mc:expr, $up:expr, $amc:expr, $aup:expr) => {
        BenchmarkEntry {
            name: $name,
            file: $file,
            source: include_str!(concat!("../corpus/", $file)),
            mc: $mc,
            up: $up,
            actual_mc: $amc,
            actual_up: $aup,
        }
    };
}

pub const BENCHMARKS: [BenchmarkEntry; 9] = [
    entry!("Kalman", "kalman.muf", true, true, true, true),
    entry!("Kalman Hold-First", "kalman_hold_first.muf", true, false, true, false),
    entry!("Gaussian Random Walk", "gaussian_random_walk.muf", false, true, false, true),
    entry!("Robot", "robot.muf", true, true, true, true),
    entry!("Coin", "coin.muf", true, true, true, true),
    entry!("Gaussian-Gaussian", "gaussian_gaussian.muf", true, true, true, true),
    entry!("Outlier", "outlier.muf", false, true, false, true),
    entry!("MTT", "mtt.muf", false, true, false, true),
    entry!("SLAM", "slam.muf", false, true, true, true),
];

/// Programs that are bounded but exercise known imprecision of the analysis.
pub const PRECISION: [BenchmarkEntry; 4] = [
    entry!("Branch conservatism", "precision_branch.muf", false, true, true, true),
    entry!("Tuple conservatism", "precision_tuple.muf", false, true, true, true),
    entry!("Delayed consumption", "delayed_consumption.muf", true, true, true, true),
    entry!("Four-state delay", "four_state_delay.muf", true, true, true, true),
];

pub fn find(name_or_file: &str) -> Option<&'static BenchmarkEntry> {
    BENCHMARKS
        .iter()
        .chain(PRECISION.iter())
        .find(|e| e.name.eq_ignore_ascii_case(name_or_file) || e.file == name_or_file)
}
