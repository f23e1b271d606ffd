//! Sweep execution: the Cartesian product of a [`SweepSpec`], run serially
//! or in parallel with byte-identical output either way.

use rayon::prelude::*;

use crate::config::{ScenarioConfig, Scheme, SweepSpec};
use crate::engine::derive_master_seed;
use crate::metrics::RunMetrics;
use crate::sim::run;

/// One cell of the sweep product.
#[derive(Debug, Clone, Copy)]
pub struct SweepCell {
    pub scheme: Scheme,
    pub density_per_km2: f64,
    pub file_size_bytes: u64,
    pub seed_index: u32,
    pub master_seed: u64,
}

/// Enumerate cells in declaration order: schemes, then densities, then
/// file sizes, then seed indices. The master seed deliberately ignores the
/// scheme so that scheme pairs share their world.
pub fn cells(spec: &SweepSpec) -> Vec<SweepCell> {
    let mut out = Vec::new();
    for &scheme in &spec.schemes {
        for &density in &spec.densities_per_km2 {
            for &size in &spec.file_sizes_bytes {
                for idx in 0..spec.seeds {
                    out.push(SweepCell {
                        scheme,
                        density_per_km2: density,
                        file_size_bytes: size,
                        seed_index: idx,
                        master_seed: derive_master_seed(spec.global_seed, density, size, idx),
                    });
                }
            }
        }
    }
    out
}

/// Scenario for one cell: the sweep base with the swept fields applied.
pub fn cell_config(spec: &SweepSpec, cell: &SweepCell) -> ScenarioConfig {
    ScenarioConfig {
        scheme: cell.scheme,
        blockage_density_per_km2: cell.density_per_km2,
        file_size_bytes: cell.file_size_bytes,
        seed: cell.master_seed,
        ..spec.base.clone()
    }
}

/// Run every cell and return metrics in cell order. Failed runs surface as
/// error strings; the sweep continues.
pub fn run_cells(spec: &SweepSpec, parallel: bool) -> Vec<Result<RunMetrics, String>> {
    let all = cells(spec);
    let exec = |cell: &SweepCell| {
        let cfg = cell_config(spec, cell);
        run(&cfg, false).map(|out| out.metrics).map_err(|e| e.to_string())
    };
    if parallel {
        all.par_iter().map(exec).collect()
    } else {
        all.iter().map(exec).collect()
    }
}

/// Full sweep CSV (header plus one row per cell, in declaration order,
/// regardless of execution order).
pub fn sweep_csv(spec: &SweepSpec, parallel: bool) -> String {
    let all = cells(spec);
    let results = run_cells(spec, parallel);
    let mut out = String::new();
    out.push_str(RunMetrics::CSV_HEADER);
    out.push('\n');
    for (cell, res) in all.iter().zip(results) {
        match res {
            Ok(m) => {
                out.push_str(&m.summary_row());
                out.push('\n');
            }
            Err(e) => {
                let msg = e.replace([',', '\n'], ";");
                // Identity columns, empty metrics, error marker.
                let empty = RunMetrics::CSV_HEADER.split(',').count() - 6;
                out.push_str(&format!(
                    "{},{},{},{},{}{}error: {}\n",
                    cell.scheme,
                    cell.master_seed,
                    cell.density_per_km2,
                    cell.file_size_bytes,
                    "",
                    ",".repeat(empty + 1),
                    msg
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_count_is_product() {
        let spec = SweepSpec {
            schemes: vec![Scheme::Dual, Scheme::Single],
            densities_per_km2: vec![1000.0, 2000.0, 4000.0, 6000.0],
            file_sizes_bytes: vec![1_000_000],
            seeds: 10,
            ..SweepSpec::default()
        };
        assert_eq!(cells(&spec).len(), 80);
    }

    #[test]
    fn paired_schemes_share_world_seed() {
        let spec = SweepSpec::default();
        let all = cells(&spec);
        let dual: Vec<_> = all.iter().filter(|c| c.scheme == Scheme::Dual).collect();
        let single: Vec<_> = all.iter().filter(|c| c.scheme == Scheme::Single).collect();
        assert_eq!(dual.len(), single.len());
        for (d, s) in dual.iter().zip(&single) {
            assert_eq!(d.master_seed, s.master_seed);
            assert_eq!(d.density_per_km2, s.density_per_km2);
        }
    }
}
