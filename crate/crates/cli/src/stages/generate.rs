use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ppgage_core::rng::derive_seed;
use ppgage_core::synth::{load_records, sample_cohort, save_records, split_dataset, PpgRecord};

use crate::artifacts::{parse_field, read_csv, require, Layout, Table};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Partition {
    Train,
    Selection,
    Holdout,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Selection, Partition::Holdout];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Selection => "selection",
            Partition::Holdout => "holdout",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// Samples the cohort and its subject-level split.
pub fn run(config: &ExperimentConfig, layout: &Layout) -> Result<Vec<PathBuf>> {
    let records = sample_cohort(&config.cohort, derive_seed(config.seed, "generate", 0))?;
    let split = split_dataset(&records, config.split.ratios, derive_seed(config.seed, "split", 0))?;
    save_records(&layout.cohort(), &records)?;

    let mut assignment = BTreeMap::new();
    for (part, recs) in [
        (Partition::Train, &split.train),
        (Partition::Selection, &split.selection),
        (Partition::Holdout, &split.holdout),
    ] {
        for r in recs {
            assignment.insert(r.id, part);
        }
    }
    let mut table = Table::new(&["id", "partition"]);
    for (id, part) in &assignment {
        table.push(vec![(*id).into(), part.name().into()]);
    }
    table.write(&layout.split())?;
    log::info!(
        "generated {} records of {} subjects ({} train / {} selection / {} holdout records)",
        records.len(),
        config.cohort.n_subjects,
        split.train.len(),
        split.selection.len(),
        split.holdout.len()
    );
    Ok(vec![layout.cohort(), layout.split()])
}

/// The cohort as written by `generate`, with each subject's partition.
pub struct Cohort {
    pub records: Vec<PpgRecord>,
    pub partition: BTreeMap<u64, Partition>,
}

impl Cohort {
    pub fn load(layout: &Layout) -> Result<Self> {
        require(&layout.cohort(), "generate")?;
        require(&layout.split(), "generate")?;
        let records = load_records(&layout.cohort())?;
        let partition = load_split(&layout.split())?;
        if let Some(r) = records.iter().find(|r| !partition.contains_key(&r.id)) {
            return Err(Error::Format { path: layout.split(), message: format!("subject {} has no partition", r.id) });
        }
        Ok(Self { records, partition })
    }

    pub fn part(&self, part: Partition) -> Vec<&PpgRecord> {
        self.records.iter().filter(|r| self.partition[&r.id] == part).collect()
    }
}

fn load_split(path: &Path) -> Result<BTreeMap<u64, Partition>> {
    let mut out = BTreeMap::new();
    for row in read_csv(path)? {
        let id: u64 = parse_field(&row, "id", path)?;
        let name: String = parse_field(&row, "partition", path)?;
        let part = Partition::parse(&name).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("unknown partition '{name}'"),
        })?;
        out.insert(id, part);
    }
    Ok(out)
}
