//! Metric accumulation and summaries: handover rate, file download
//! failure ratio, and completion-time statistics, plus the fixed-header
//! per-run CSV row.

use crate::config::Scheme;
use crate::dataplane::FileJob;

/// Byte-level accounting for one run. Primary copies obey exact
/// conservation (generated = delivered + residual + dropped); packet
/// duplication copies are tracked separately.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteAccounting {
    pub generated: u64,
    pub delivered: u64,
    pub residual: u64,
    pub dropped: u64,
    pub dup_enqueued: u64,
    pub dup_dropped: u64,
    pub dup_purged: u64,
}

/// Everything measured over one run.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub scheme: Scheme,
    pub seed: u64,
    pub density_per_km2: f64,
    pub file_size_bytes: u64,
    pub sim_duration_s: f64,
    pub handover_trials: u64,
    pub path_switches: u64,
    pub fallback_events: u64,
    pub files: Vec<FileJob>,
    pub bytes: ByteAccounting,
    pub pdcp_app_deliveries: u64,
    pub pdcp_delivered_unique: u64,
    pub pdcp_suppressed_duplicates: u64,
    pub count_inflight_as_failed: bool,
}

/// Five-number summary of completion times plus the box-plot outlier count
/// (beyond 1.5 x IQR).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub outliers: usize,
}

impl RunMetrics {
    /// Handover trials per second of simulated time.
    pub fn handover_rate(&self) -> f64 {
        assert!(self.sim_duration_s > 0.0, "zero-duration runs are rejected at config time");
        self.handover_trials as f64 / self.sim_duration_s
    }

    pub fn path_switch_rate(&self) -> f64 {
        assert!(self.sim_duration_s > 0.0);
        self.path_switches as f64 / self.sim_duration_s
    }

    /// Files with a pass/fail verdict at run end (in-flight files are
    /// excluded unless configured as failures).
    pub fn file_verdicts(&self) -> (u64, u64, u64) {
        let mut failed = 0;
        let mut completed_ok = 0;
        let mut inflight = 0;
        for f in &self.files {
            match f.failed(self.sim_duration_s, self.count_inflight_as_failed) {
                Some(true) => failed += 1,
                Some(false) => completed_ok += 1,
                None => inflight += 1,
            }
        }
        (completed_ok, failed, inflight)
    }

    /// Download failures over total decided transmissions; `None` when no
    /// file has a verdict.
    pub fn download_failure_ratio(&self) -> Option<f64> {
        assert!(!self.files.is_empty(), "at least one file must have been generated");
        let (ok, failed, _) = self.file_verdicts();
        let total = ok + failed;
        if total == 0 {
            None
        } else {
            Some(failed as f64 / total as f64)
        }
    }

    /// Completion-time summary over files that completed (whether or not
    /// they beat their deadline); `None` when nothing completed.
    pub fn completion_time_stats(&self) -> Option<CompletionStats> {
        let mut times: Vec<f64> = self
            .files
            .iter()
            .filter_map(|f| f.completed.map(|t| t - f.created))
            .collect();
        if times.is_empty() {
            return None;
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(five_number_summary(&times))
    }

    /// The fixed summary CSV header.
    pub const CSV_HEADER: &'static str = "scheme,seed,density_per_km2,file_size_bytes,duration_s,\
handover_trials,handover_rate_per_s,path_switches,path_switch_rate_per_s,fallback_events,\
files_total,files_completed,files_failed,files_inflight,failure_ratio,\
ct_min_s,ct_q1_s,ct_median_s,ct_q3_s,ct_max_s,ct_outliers,\
bytes_generated,bytes_delivered,bytes_residual,bytes_dropped,pdcp_suppressed_duplicates,status";

    /// One CSV row matching [`Self::CSV_HEADER`].
    pub fn summary_row(&self) -> String {
        let (ok, failed, inflight) = self.file_verdicts();
        let ratio = self.download_failure_ratio().map(|r| r.to_string()).unwrap_or_default();
        let ct = self.completion_time_stats();
        let ctf = |f: fn(&CompletionStats) -> f64| ct.as_ref().map(|c| f(c).to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},ok",
            self.scheme,
            self.seed,
            self.density_per_km2,
            self.file_size_bytes,
            self.sim_duration_s,
            self.handover_trials,
            self.handover_rate(),
            self.path_switches,
            self.path_switch_rate(),
            self.fallback_events,
            self.files.len(),
            ok,
            failed,
            inflight,
            ratio,
            ctf(|c| c.min),
            ctf(|c| c.q1),
            ctf(|c| c.median),
            ctf(|c| c.q3),
            ctf(|c| c.max),
            ct.as_ref().map(|c| c.outliers.to_string()).unwrap_or_default(),
            self.bytes.generated,
            self.bytes.delivered,
            self.bytes.residual,
            self.bytes.dropped,
            self.pdcp_suppressed_duplicates,
        )
    }
}

/// Linear-interpolation quartiles (the numpy default convention) over a
/// sorted slice, with outliers counted beyond 1.5 x IQR.
pub fn five_number_summary(sorted: &[f64]) -> CompletionStats {
    let q = |p: f64| quantile_sorted(sorted, p);
    let q1 = q(0.25);
    let q3 = q(0.75);
    let iqr = q3 - q1;
    let lo = q1 - 1.5 * iqr;
    let hi = q3 + 1.5 * iqr;
    let outliers = sorted.iter().filter(|&&x| x < lo || x > hi).count();
    CompletionStats {
        count: sorted.len(),
        min: sorted[0],
        q1,
        median: q(0.5),
        q3,
        max: sorted[sorted.len() - 1],
        outliers,
    }
}

/// Quantile of a sorted slice by linear interpolation.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(id: u32, created: f64, deadline: f64, completed: Option<f64>) -> FileJob {
        FileJob {
            id,
            size: 100,
            created,
            deadline,
            first_seq: 0,
            pdu_count: 1,
            delivered_bytes: if completed.is_some() { 100 } else { 0 },
            completed,
        }
    }

    fn base_metrics(files: Vec<FileJob>) -> RunMetrics {
        RunMetrics {
            scheme: Scheme::Dual,
            seed: 1,
            density_per_km2: 4000.0,
            file_size_bytes: 100,
            sim_duration_s: 50.0,
            handover_trials: 0,
            path_switches: 0,
            fallback_events: 0,
            files,
            bytes: ByteAccounting::default(),
            pdcp_app_deliveries: 0,
            pdcp_delivered_unique: 0,
            pdcp_suppressed_duplicates: 0,
            count_inflight_as_failed: false,
        }
    }

    #[test]
    fn handover_rate_definition() {
        let mut m = base_metrics(vec![job(0, 0.0, 0.12, Some(0.01))]);
        m.handover_trials = 5;
        assert_eq!(m.handover_rate(), 0.1);
        m.handover_trials = 0;
        assert_eq!(m.handover_rate(), 0.0);
    }

    #[test]
    fn failure_ratio_counts_deadline_misses() {
        let mut files = Vec::new();
        for i in 0..450u32 {
            files.push(job(i, 0.0, 0.12, Some(0.05)));
        }
        for i in 450..500u32 {
            files.push(job(i, 0.0, 0.12, None)); // never completed, past deadline
        }
        let m = base_metrics(files);
        assert_eq!(m.download_failure_ratio(), Some(0.1));
    }

    #[test]
    fn late_completion_is_a_failure_but_counts_in_stats() {
        let m = base_metrics(vec![job(0, 0.0, 0.12, Some(0.5))]);
        let (ok, failed, _) = m.file_verdicts();
        assert_eq!((ok, failed), (0, 1));
        assert_eq!(m.completion_time_stats().unwrap().count, 1);
    }

    #[test]
    fn inflight_excluded_by_default_counted_when_configured() {
        // Deadline after run end, not completed.
        let mut m = base_metrics(vec![job(0, 49.95, 50.07, None), job(1, 0.0, 0.12, Some(0.01))]);
        assert_eq!(m.file_verdicts(), (1, 0, 1));
        assert_eq!(m.download_failure_ratio(), Some(0.0));
        m.count_inflight_as_failed = true;
        assert_eq!(m.file_verdicts(), (1, 1, 0));
        assert_eq!(m.download_failure_ratio(), Some(0.5));
    }

    #[test]
    fn degenerate_completion_distribution() {
        let files = (0..10u32).map(|i| job(i, 0.0, 1.0, Some(0.010))).collect();
        let m = base_metrics(files);
        let s = m.completion_time_stats().unwrap();
        assert_eq!(s.q1, 0.010);
        assert_eq!(s.median, 0.010);
        assert_eq!(s.q3, 0.010);
        assert_eq!(s.outliers, 0);
    }

    #[test]
    fn iqr_outlier_count() {
        let s = five_number_summary(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(s.q1, 2.0);
        assert_eq!(s.q3, 4.0);
        assert_eq!(s.outliers, 1);
        assert_eq!(s.median, 3.0);
    }

    #[test]
    fn csv_row_matches_header_arity() {
        let m = base_metrics(vec![job(0, 0.0, 0.12, Some(0.01))]);
        let header_cols = RunMetrics::CSV_HEADER.split(',').count();
        let row_cols = m.summary_row().split(',').count();
        assert_eq!(header_cols, row_cols);
    }
}
