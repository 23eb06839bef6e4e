//! On-disk layout of a store:
//!
//! ```text
//! store/
//!   locations.csv                      code,name
//!   <signal>/ingested.txt              one version date per line
//!   <signal>/<location>/<YYYY-MM-DD>.csv   header `date,value`, one row per day
//! ```
//!
//! `<signal>` is `cumulative_cases` or `cumulative_deaths`. Version files are
//! write-once: saving never rewrites a file that already exists.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;

use super::{DatedSeries, Signal, Store, StoreError, VersionedSeries};
use crate::numeric::fmt_f64;

fn layout_err(path: &Path, reason: impl Into<String>) -> StoreError {
    StoreError::Layout {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

impl Store {
    /// Loads a store directory. A missing directory yields an empty store.
    pub fn open(dir: &Path) -> Result<Store, StoreError> {
        let mut store = Store::new();
        if !dir.exists() {
            return Ok(store);
        }
        let names = dir.join("locations.csv");
        if names.exists() {
            for line in fs::read_to_string(&names)?.lines().skip(1) {
                let (code, name) = line
                    .split_once(',')
                    .ok_or_else(|| layout_err(&names, format!("bad row `{line}`")))?;
                store.names.insert(code.to_string(), name.to_string());
            }
        }
        for signal in Signal::ALL {
            let sdir = dir.join(signal.truth_name());
            if !sdir.is_dir() {
                continue;
            }
            let ingested = sdir.join("ingested.txt");
            if ingested.exists() {
                for line in fs::read_to_string(&ingested)?.lines().filter(|l| !l.is_empty()) {
                    let date: NaiveDate = line
                        .parse()
                        .map_err(|_| layout_err(&ingested, format!("bad date `{line}`")))?;
                    store.ingested.insert((signal, date));
                }
            }
            let mut locs: Vec<_> = fs::read_dir(&sdir)?
                .filter_map(Result::ok)
                .filter(|e| e.path().is_dir())
                .collect();
            locs.sort_by_key(|e| e.file_name());
            for loc in locs {
                let code = loc.file_name().to_string_lossy().into_owned();
                let mut vs = VersionedSeries::new(store.location(&code), signal);
                for file in fs::read_dir(loc.path())? {
                    let path = file?.path();
                    let date: NaiveDate = path
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| layout_err(&path, "file name is not a version date"))?;
                    vs.versions.insert(date, Arc::new(read_version(&path)?));
                    store.ingested.insert((signal, date));
                }
                store.series.insert((signal, code), vs);
            }
        }
        Ok(store)
    }

    /// Writes any version files not yet present under `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir)?;
        let mut names = String::from("code,name\n");
        for (code, name) in &self.names {
            names.push_str(&format!("{code},{name}\n"));
        }
        fs::write(dir.join("locations.csv"), names)?;
        for signal in Signal::ALL {
            let dates = self.version_dates(signal);
            if dates.is_empty() {
                continue;
            }
            let sdir = dir.join(signal.truth_name());
            fs::create_dir_all(&sdir)?;
            let listing: String = dates.iter().map(|d| format!("{d}\n")).collect();
            fs::write(sdir.join("ingested.txt"), listing)?;
        }
        for ((signal, code), vs) in &self.series {
            let ldir = dir.join(signal.truth_name()).join(code);
            fs::create_dir_all(&ldir)?;
            for (date, series) in &vs.versions {
                let path = ldir.join(format!("{date}.csv"));
                if !path.exists() {
                    fs::write(&path, write_version(series))?;
                }
            }
        }
        Ok(())
    }
}

fn write_version(series: &DatedSeries) -> String {
    let mut out = String::from("date,value\n");
    for (date, v) in series.iter() {
        out.push_str(&format!("{date},{}\n", fmt_f64(v)));
    }
    out
}

fn read_version(path: &Path) -> Result<DatedSeries, StoreError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("date,value") {
        return Err(layout_err(path, "missing `date,value` header"));
    }
    let mut start = None;
    let mut values = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let parsed = line.split_once(',').and_then(|(d, v)| {
            Some((d.parse::<NaiveDate>().ok()?, v.parse::<f64>().ok()?))
        });
        let (date, v) = parsed.ok_or_else(|| layout_err(path, format!("bad row `{line}`")))?;
        let first = *start.get_or_insert(date);
        if (date - first).num_days() != values.len() as i64 {
            return Err(layout_err(path, "dates are not contiguous"));
        }
        values.push(v);
    }
    let start = start.ok_or_else(|| layout_err(path, "empty version file"))?;
    Ok(DatedSeries::new(start, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::IngestFormat;

    #[test]
    fn save_then_open_preserves_snapshots() {
        let tmp = tempfile::tempdir().unwrap();
        let mut store = Store::new();
        let d1: NaiveDate = "2020-07-02".parse().unwrap();
        let d2: NaiveDate = "2020-07-03".parse().unwrap();
        store
            .ingest_version(
                b"location,name,2020-07-01,2020-07-02\n06,California,1,2.5\n",
                d1,
                IngestFormat::Wide(Signal::Cases),
            )
            .unwrap();
        store
            .ingest_version(
                b"location,date,value\n06,2020-07-01,1\n06,2020-07-02,2\n06,2020-07-03,4\n",
                d2,
                IngestFormat::HubTruth(Signal::Cases),
            )
            .unwrap();
        store.save(tmp.path()).unwrap();
        let reopened = Store::open(tmp.path()).unwrap();
        for as_of in [d1, d2] {
            assert_eq!(
                reopened.snapshot(as_of).unwrap().to_canonical_bytes(),
                store.snapshot(as_of).unwrap().to_canonical_bytes()
            );
        }
        assert_eq!(reopened.location("06").name, "California");
        assert_eq!(reopened.version_dates(Signal::Cases), vec![d1, d2]);
        assert!(tmp.path().join("cumulative_cases/06/2020-07-03.csv").exists());
    }
}
