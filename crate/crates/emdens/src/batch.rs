//! One model, many datasets.
//!
//! A manifest lists one matrix path per line. Relative paths are resolved
//! against the manifest's directory; blank lines and lines starting with `#`
//! are ignored. Each dataset is written to `<out>/<file stem>/`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use emdens_core::autoencoder::DsaModel;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::load_matrix;
use crate::pipeline::{analyze, AnalysisSettings};
use crate::report::{write_artifacts, Report};

pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

pub fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Output directory per input; fails when two inputs share a file stem.
pub fn output_dirs(inputs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let mut seen = BTreeSet::new();
    inputs
        .iter()
        .map(|p| {
            let name = dataset_name(p);
            if !seen.insert(name.clone()) {
                return Err(Error::Usage(format!("two inputs are named {name:?}")));
            }
            Ok(out.join(name))
        })
        .collect()
}

/// Runs the analysis for each input concurrently. `training_seconds`, when
/// known, is spread evenly over the datasets in the reports.
pub fn run_batch(
    model: &DsaModel,
    inputs: &[PathBuf],
    out: &Path,
    settings: &AnalysisSettings,
    training_seconds: Option<f64>,
) -> Result<Vec<Result<Report>>> {
    let dirs = output_dirs(inputs, out)?;
    let share = training_seconds.map(|t| t / inputs.len().max(1) as f64);
    Ok(inputs
        .par_iter()
        .zip(&dirs)
        .map(|(input, dir)| {
            let img = load_matrix(input)?;
            let mut analysis = analyze(model, &img, settings)?;
            analysis.timings.training = training_seconds;
            analysis.timings.training_amortized = share;
            for w in &analysis.warnings {
                log::warn!("{}: {w}", input.display());
            }
            write_artifacts(dir, &dataset_name(input), &img, &analysis, settings)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_paths_are_relative_to_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("list.txt");
        std::fs::write(&m, "# inputs\na.csv\n\n  sub/b.f32 \n/abs/c.csv\n").unwrap();
        let got = read_manifest(&m).unwrap();
        assert_eq!(
            got,
            vec![dir.path().join("a.csv"), dir.path().join("sub/b.f32"), PathBuf::from("/abs/c.csv")]
        );
    }

    #[test]
    fn duplicate_stems_are_rejected() {
        let inputs = [PathBuf::from("x/a.csv"), PathBuf::from("y/a.f32")];
        assert!(output_dirs(&inputs, Path::new("out")).is_err());
        assert_eq!(
            output_dirs(&inputs[..1], Path::new("out")).unwrap(),
            vec![PathBuf::from("out/a")]
        );
    }
}
