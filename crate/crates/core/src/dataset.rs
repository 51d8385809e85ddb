//! Training corpus: random rooms drawn from the parameter ranges, each
//! simulated once and stored as one CSV row.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::params::{bounds, Interval, RoomSpec};
use crate::sim::{run_room, RoomMetrics, SimConfig};

pub const CSV_HEADER: &str = "idx,seed,width,length,exit_size,input_flow,flow_duration,initial_population,tt,avg_exit_time,avg_speed,avg_density,censored";

/// Flow duration cap for the reduced corpus.
pub const DESK_FLOW_DURATION: Interval = Interval::new(0.2, 20.0);

/// Which parameter ranges to draw from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// The full training ranges.
    #[default]
    Full,
    /// Full ranges except the flow duration, capped at 20 s.
    Desk,
}

impl Profile {
    pub fn flow_duration(self) -> Interval {
        match self {
            Profile::Full => bounds::FLOW_DURATION,
            Profile::Desk => DESK_FLOW_DURATION,
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, i: Interval) -> f64 {
    rng.gen_range(i.min..=i.max)
}

/// Draws one room. Every room gets an inflow; an exit wider than the room
/// is redrawn.
pub fn sample_room<R: Rng>(rng: &mut R, profile: Profile) -> RoomSpec {
    let width = uniform(rng, bounds::WIDTH);
    let length = uniform(rng, bounds::LENGTH);
    let mut exit_size = uniform(rng, bounds::EXIT_SIZE);
    while exit_size > width {
        exit_size = uniform(rng, bounds::EXIT_SIZE);
    }
    let input_flow = uniform(rng, bounds::INPUT_FLOW);
    let flow_duration = uniform(rng, profile.flow_duration());
    let ip = bounds::INITIAL_POPULATION;
    let initial_population = rng.gen_range(ip.min as u32..=ip.max as u32);
    RoomSpec { width, length, exit_size, input_flow, flow_duration, initial_population }
}

/// Seed of record `idx`. Distinct indices give distinct seeds: the mix
/// below is a bijection on `u64` and its argument differs per index.
pub fn record_seed(base: u64, idx: u64) -> u64 {
    let mut z = base.wrapping_add(idx.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub idx: u64,
    pub seed: u64,
    pub spec: RoomSpec,
    pub metrics: RoomMetrics,
}

/// Flat CSV row; field order is the header order.
#[derive(Serialize, Deserialize)]
struct Row {
    idx: u64,
    seed: u64,
    width: f64,
    length: f64,
    exit_size: f64,
    input_flow: f64,
    flow_duration: f64,
    initial_population: u32,
    tt: f64,
    avg_exit_time: f64,
    avg_speed: f64,
    avg_density: f64,
    censored: bool,
}

impl From<&DatasetRecord> for Row {
    fn from(r: &DatasetRecord) -> Self {
        let (s, m) = (&r.spec, &r.metrics);
        Row {
            idx: r.idx,
            seed: r.seed,
            width: s.width,
            length: s.length,
            exit_size: s.exit_size,
            input_flow: s.input_flow,
            flow_duration: s.flow_duration,
            initial_population: s.initial_population,
            tt: m.tt,
            avg_exit_time: m.avg_exit_time,
            avg_speed: m.avg_speed,
            avg_density: m.avg_density,
            censored: m.censored,
        }
    }
}

impl From<Row> for DatasetRecord {
    fn from(r: Row) -> Self {
        DatasetRecord {
            idx: r.idx,
            seed: r.seed,
            spec: RoomSpec::new(r.width, r.length, r.exit_size, r.input_flow, r.flow_duration, r.initial_population),
            metrics: RoomMetrics {
                tt: r.tt,
                avg_exit_time: r.avg_exit_time,
                avg_speed: r.avg_speed,
                avg_density: r.avg_density,
                censored: r.censored,
            },
        }
    }
}

/// Draws and simulates record `idx`.
pub fn simulate_record(base_seed: u64, idx: u64, profile: Profile, cfg: &SimConfig) -> Result<DatasetRecord, SimError> {
    let seed = record_seed(base_seed, idx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = sample_room(&mut rng, profile);
    let cfg = SimConfig { rng_seed: seed, ..cfg.clone() };
    let metrics = run_room(&spec, &cfg)?;
    Ok(DatasetRecord { idx, seed, spec, metrics })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub written: usize,
    pub censored: usize,
}

/// Simulates records `0..count` in parallel (on the current rayon pool)
/// and returns them sorted by index.
pub fn generate_records(
    count: usize,
    base_seed: u64,
    profile: Profile,
    cfg: &SimConfig,
) -> Result<Vec<DatasetRecord>, SimError> {
    cfg.validate()?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let step = (count / 20).max(1);
    let mut records = (0..count as u64)
        .into_par_iter()
        .map(|idx| {
            let r = simulate_record(base_seed, idx, profile, cfg);
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            if n.is_multiple_of(step) {
                log::info!("simulated {n}/{count} rooms");
            }
            r
        })
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|r| r.idx);
    Ok(records)
}

/// Generates `count` records and writes them to `out`. The file is written
/// under a temporary name and renamed at the end, so a failed run leaves no
/// partial corpus behind.
pub fn generate(
    count: usize,
    base_seed: u64,
    profile: Profile,
    cfg: &SimConfig,
    out: &Path,
) -> Result<GenerateSummary, SimError> {
    if count == 0 {
        return Err(SimError::InvalidInput("record count must be positive".into()));
    }
    let records = generate_records(count, base_seed, profile, cfg)?;
    write_csv(&records, out)?;
    let censored = records.iter().filter(|r| r.metrics.censored).count();
    if censored > 0 {
        log::warn!("{censored} of {count} rooms hit the time limit and are flagged as censored");
    }
    Ok(GenerateSummary { written: records.len(), censored })
}

pub fn write_csv(records: &[DatasetRecord], out: &Path) -> Result<(), SimError> {
    let mut tmp_name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".partial");
    let tmp = out.with_file_name(tmp_name);
    let result = (|| -> Result<(), SimError> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(to_csv_string(records)?.as_bytes())?;
        w.flush()?;
        Ok(())
    })();
    match result {
        Ok(()) => Ok(fs::rename(&tmp, out)?),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn to_csv_string(records: &[DatasetRecord]) -> Result<String, SimError> {
    if records.is_empty() {
        return Ok(format!("{CSV_HEADER}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(Row::from(r)).map_err(|e| SimError::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SimError::Format(e.to_string()))
}

pub fn from_csv_str(text: &str) -> Result<Vec<DatasetRecord>, SimError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| SimError::Format(e.to_string()))?;
    let found: Vec<&str> = header.iter().collect();
    if found.join(",") != CSV_HEADER {
        return Err(SimError::Format(format!("unexpected header '{}'", found.join(","))));
    }
    r.deserialize::<Row>()
        .map(|row| row.map(DatasetRecord::from).map_err(|e| SimError::Format(e.to_string())))
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<DatasetRecord>, SimError> {
    let text = fs::read_to_string(path)?;
    from_csv_str(&text).map_err(|e| SimError::Format(format!("{}: {e}", path.display())))
}

/// Records usable for training: not censored.
pub fn usable(records: &[DatasetRecord]) -> Vec<DatasetRecord> {
    records.iter().filter(|r| !r.metrics.censored).copied().collect()
}

/// Splits off the last `holdout` records (by position) for validation.
pub fn split(records: &[DatasetRecord], holdout: usize) -> (Vec<DatasetRecord>, Vec<DatasetRecord>) {
    let cut = records.len().saturating_sub(holdout);
    (records[..cut].to_vec(), records[cut..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_in_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let s = sample_room(&mut rng, Profile::Full);
            assert!(s.out_of_domain().is_empty(), "{s:?}");
            assert!(s.exit_size <= s.width);
            let d = sample_room(&mut rng, Profile::Desk);
            assert!(d.flow_duration <= 20.0);
        }
    }

    #[test]
    fn record_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| record_seed(3, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn header_matches_row_layout() {
        let rec = DatasetRecord {
            idx: 0,
            seed: 1,
            spec: RoomSpec::closed(4.0, 5.0, 1.0, 3),
            metrics: RoomMetrics { tt: 1.5, avg_exit_time: 1.0, avg_speed: 1.1, avg_density: 0.2, censored: false },
        };
        let text = to_csv_string(&[rec]).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(from_csv_str(&text).unwrap(), vec![rec]);
    }
}
