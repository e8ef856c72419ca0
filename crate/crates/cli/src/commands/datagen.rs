use spectrans_core::datagen::{generate_dataset, save_dataset, Manifest};

use super::Common;
use crate::{create_dir, CliError};

/// Generate the configured synthetic dataset into `--out`.
pub fn datagen(common: &Common) -> Result<Manifest, CliError> {
    let cfg = common.resolve_config(None)?;
    let analysis = cfg.analysis()?;
    create_dir(&common.out)?;
    let dataset = generate_dataset(&cfg.dataset, &analysis, common.jobs())?;
    let manifest = save_dataset(&dataset, &common.out, analysis.params(), common.jobs())?;
    cfg.write_to(&common.out)?;
    eprintln!(
        "{} pairs from {} scores ({}, {} input channel(s)) written to {}",
        manifest.pairs.len(),
        manifest.scores.len(),
        manifest.task.name(),
        manifest.image.input_channels,
        common.out.display()
    );
    Ok(manifest)
}
