//! Subject-level splitting and the JSON-lines dataset format.
//!
//! Each line is one record object with the fields `id`, `visit`, `age`,
//! `latent_offset`, `waveform`, `event_time`, `event` and `covariates`
//! (an object of named numbers). Numbers are written with 9 significant
//! digits, so reading and rewriting a file reproduces it byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;

use super::cohort::PpgRecord;
use crate::error::{invalid, Error, Result};
use crate::numfmt::{round_sig, SIG_DIGITS};
use crate::rng;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<PpgRecord>,
    pub selection: Vec<PpgRecord>,
    pub holdout: Vec<PpgRecord>,
}

/// Partition sizes by largest remainder: each part gets the floor of its
/// exact share, leftovers go to the largest fractional parts (earlier
/// parts win ties).
fn partition_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let total: f64 = ratios.iter().sum();
    let exact: Vec<f64> = ratios.iter().map(|r| n as f64 * r / total).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let left = n - sizes.iter().sum::<usize>();
    for &i in order.iter().take(left) {
        sizes[i] += 1;
    }
    sizes
}

/// Splits by subject so that no subject appears in two partitions.
/// Partition sizes count subjects and are within one of the exact ratio.
pub fn split_dataset(records: &[PpgRecord], ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return invalid("split ratios must be positive");
    }
    let mut subjects: Vec<u64> = records.iter().map(|r| r.id).collect::<BTreeSet<_>>().into_iter().collect();
    if subjects.len() < 3 {
        return invalid(format!("{} subjects cannot fill 3 partitions", subjects.len()));
    }
    subjects.shuffle(&mut rng::stream(seed, "split", 0));
    let [n_train, n_sel, _] = partition_sizes(subjects.len(), ratios);
    let part: BTreeMap<u64, usize> = subjects
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            (
                id,
                if i < n_train {
                    0
                } else if i < n_train + n_sel {
                    1
                } else {
                    2
                },
            )
        })
        .collect();
    let mut split = Split::default();
    for r in records {
        let dst = match part[&r.id] {
            0 => &mut split.train,
            1 => &mut split.selection,
            _ => &mut split.holdout,
        };
        dst.push(r.clone());
    }
    Ok(split)
}

fn rounded(r: &PpgRecord) -> PpgRecord {
    let s = |v: f64| round_sig(v, SIG_DIGITS);
    PpgRecord {
        id: r.id,
        visit: r.visit,
        age: s(r.age),
        latent_offset: s(r.latent_offset),
        waveform: r.waveform.iter().map(|&v| s(v)).collect(),
        event_time: s(r.event_time),
        event: r.event,
        covariates: r.covariates.iter().map(|(k, &v)| (k.clone(), s(v))).collect(),
    }
}

pub fn write_records<W: Write>(mut out: W, records: &[PpgRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &rounded(r)).map_err(|e| Error::Format(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<PpgRecord>> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PpgRecord = serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        if !(r.event_time > 0.0) || r.event > 1 {
            return Err(Error::Format(format!("line {}: invalid outcome fields", i + 1)));
        }
        records.push(r);
    }
    Ok(records)
}

pub fn save_records(path: &std::path::Path, records: &[PpgRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_records(std::io::BufWriter::new(file), records)
}

pub fn load_records(path: &std::path::Path) -> Result<Vec<PpgRecord>> {
    read_records(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::cohort::{sample_cohort, CohortSpec};

    fn cohort(n: usize, serial: f64, seed: u64) -> Vec<PpgRecord> {
        let spec = CohortSpec { n_subjects: n, serial_fraction: serial, ..CohortSpec::default() };
        sample_cohort(&spec, seed).unwrap()
    }

    fn subject_count(r: &[PpgRecord]) -> usize {
        r.iter().map(|r| r.id).collect::<BTreeSet<_>>().len()
    }

    #[test]
    fn ten_subjects_split_eight_one_one() {
        let s = split_dataset(&cohort(10, 0.0, 1), [8.0, 1.0, 1.0], 0).unwrap();
        assert_eq!((s.train.len(), s.selection.len(), s.holdout.len()), (8, 1, 1));
    }

    #[test]
    fn sizes_within_one_of_exact_ratio() {
        for n in [3usize, 7, 11, 99, 1234] {
            let sizes = partition_sizes(n, [8.0, 1.0, 1.0]);
            assert_eq!(sizes.iter().sum::<usize>(), n);
            for (s, r) in sizes.iter().zip([0.8, 0.1, 0.1]) {
                assert!((*s as f64 - n as f64 * r).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn serial_subjects_never_straddle_partitions() {
        let records = cohort(60, 0.5, 2);
        for seed in 0..100 {
            let s = split_dataset(&records, [8.0, 1.0, 1.0], seed).unwrap();
            let ids = |p: &[PpgRecord]| p.iter().map(|r| r.id).collect::<BTreeSet<_>>();
            let (a, b, c) = (ids(&s.train), ids(&s.selection), ids(&s.holdout));
            assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
            assert_eq!(s.train.len() + s.selection.len() + s.holdout.len(), records.len());
            assert_eq!(subject_count(&s.train) + subject_count(&s.selection) + subject_count(&s.holdout), 60);
        }
    }

    #[test]
    fn split_is_seed_deterministic_and_validates() {
        let records = cohort(30, 0.0, 3);
        assert_eq!(
            split_dataset(&records, [8.0, 1.0, 1.0], 4).unwrap(),
            split_dataset(&records, [8.0, 1.0, 1.0], 4).unwrap()
        );
        assert!(split_dataset(&records[..2], [8.0, 1.0, 1.0], 0).is_err());
        assert!(split_dataset(&records, [8.0, 0.0, 1.0], 0).is_err());
    }

    #[test]
    fn jsonl_round_trip_is_lossless_at_nine_digits() {
        let records = cohort(5, 0.4, 6);
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let back = read_records(&buf[..]).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(rounded(a), *b);
        }
        let mut again = Vec::new();
        write_records(&mut again, &back).unwrap();
        assert_eq!(buf, again);
        let line = std::str::from_utf8(&buf).unwrap().lines().next().unwrap();
        for field in ["\"id\"", "\"visit\"", "\"age\"", "\"waveform\"", "\"event_time\"", "\"event\"", "\"covariates\""]
        {
            assert!(line.contains(field), "missing {field}");
        }
    }
}
