//! Forecast archive: `<root>/<method_id>/<origin>.csv` in submission format,
//! plus an optional `method.toml` descriptor per method.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::HarnessError;
use crate::forecast::{parse_submission, write_submission, ForecastSet, MethodDescriptor};

pub const DESCRIPTOR_FILE: &str = "method.toml";

#[derive(Debug, Clone)]
pub struct Archive {
    root: PathBuf,
}

impl Archive {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, method_id: &str, origin: NaiveDate) -> PathBuf {
        self.root.join(method_id).join(format!("{origin}.csv"))
    }

    fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        }
        fs::write(path, bytes).map_err(HarnessError::io(path))
    }

    /// Writes the canonical rendering of `set`.
    pub fn write(&self, set: &ForecastSet) -> Result<PathBuf, HarnessError> {
        let path = self.path(&set.method_id, set.origin);
        Self::write_file(&path, &write_submission(set))?;
        Ok(path)
    }

    /// Stores an external submission byte for byte after checking it parses.
    /// Returns the number of skipped rows.
    pub fn import(&self, method_id: &str, origin: Option<NaiveDate>, raw: &[u8]) -> Result<(NaiveDate, usize), HarnessError> {
        let parsed = parse_submission(raw, method_id, origin)?;
        let origin = parsed.set.origin;
        Self::write_file(&self.path(method_id, origin), raw)?;
        if self.descriptor(method_id)?.is_none() {
            self.write_descriptor(&MethodDescriptor::imported(method_id))?;
        }
        Ok((origin, parsed.skipped))
    }

    pub fn write_descriptor(&self, descriptor: &MethodDescriptor) -> Result<(), HarnessError> {
        let text = toml::to_string(descriptor).expect("descriptors serialize");
        Self::write_file(&self.root.join(&descriptor.method_id).join(DESCRIPTOR_FILE), text.as_bytes())
    }

    pub fn descriptor(&self, method_id: &str) -> Result<Option<MethodDescriptor>, HarnessError> {
        let path = self.root.join(method_id).join(DESCRIPTOR_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
        toml::from_str(&text)
            .map(Some)
            .map_err(|e| HarnessError::Parse { path, reason: e.to_string() })
    }

    /// Descriptor on file, else the imported default.
    pub fn descriptor_or_default(&self, method_id: &str) -> Result<MethodDescriptor, HarnessError> {
        Ok(self.descriptor(method_id)?.unwrap_or_else(|| MethodDescriptor::imported(method_id)))
    }

    /// Method directories, sorted.
    pub fn methods(&self) -> Result<Vec<String>, HarnessError> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(HarnessError::io(&self.root))? {
            let entry = entry.map_err(HarnessError::io(&self.root))?;
            if entry.path().is_dir() {
                out.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    /// Origins with a forecast file for `method_id`, sorted.
    pub fn origins(&self, method_id: &str) -> Result<Vec<NaiveDate>, HarnessError> {
        let dir = self.root.join(method_id);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(HarnessError::io(&dir))? {
            let name = entry.map_err(HarnessError::io(&dir))?.file_name();
            if let Some(date) = name.to_str().and_then(|n| n.strip_suffix(".csv")).and_then(|s| s.parse().ok()) {
                out.push(date);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn load(&self, method_id: &str, origin: NaiveDate) -> Result<Option<ForecastSet>, HarnessError> {
        let path = self.path(method_id, origin);
        if !path.exists() {
            return Ok(None);
        }
        let raw = fs::read(&path).map_err(HarnessError::io(&path))?;
        Ok(Some(parse_submission(&raw, method_id, Some(origin))?.set))
    }

    pub fn read_bytes(&self, method_id: &str, origin: NaiveDate) -> Result<Vec<u8>, HarnessError> {
        let path = self.path(method_id, origin);
        fs::read(&path).map_err(HarnessError::io(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{Category, ForecastValue, TargetSpec, TargetType};
    use crate::store::LocationId;

    #[test]
    fn write_load_and_list() {
        let dir = tempfile::tempdir().unwrap();
        let archive = Archive::new(dir.path());
        let origin: NaiveDate = "2020-07-05".parse().unwrap();
        let mut set = ForecastSet::new("m1", origin);
        set.insert(TargetSpec::ahead(LocationId::new("06"), TargetType::INC_DEATH, origin, 1), ForecastValue::from_point(3.5))
            .unwrap();
        archive.write(&set).unwrap();
        assert_eq!(archive.load("m1", origin).unwrap(), Some(set));
        assert_eq!(archive.methods().unwrap(), vec!["m1"]);
        assert_eq!(archive.origins("m1").unwrap(), vec![origin]);
        assert_eq!(archive.load("m1", "2020-07-12".parse().unwrap()).unwrap(), None);
    }

    #[test]
    fn import_keeps_bytes_and_defaults_descriptor() {
        let dir = tempfile::tempdir().unwrap();
        let archive = Archive::new(dir.path());
        let raw = b"forecast_date,target,target_end_date,location,type,quantile,value\n\
2020-07-05,1 wk ahead inc death,2020-07-11,06,point,NA,510\n\
2020-07-05,1 day ahead inc death,2020-07-06,06,point,NA,70\n";
        let (origin, skipped) = archive.import("hub-team", None, raw).unwrap();
        assert_eq!(origin, "2020-07-05".parse::<NaiveDate>().unwrap());
        assert_eq!(skipped, 1);
        assert_eq!(archive.read_bytes("hub-team", origin).unwrap(), raw.to_vec());
        let desc = archive.descriptor("hub-team").unwrap().unwrap();
        assert_eq!(desc.category, Category::HumanExpert);
    }
}
