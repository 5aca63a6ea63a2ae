//! On-disk dataset archive: `dataset.json` plus one long-layout CSV per split.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    ingest_csv, write_long_csv, Dataset, ImputationStats, Layout, MissingnessReport, Provenance,
    SplitName, WindowSchema,
};
use crate::{Error, Result};

const FORMAT: &str = "tsattr-dataset";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    schema: WindowSchema,
    splits: Vec<SplitName>,
    imputation: ImputationStats,
    missingness: MissingnessReport,
    provenance: Provenance,
    digest: String,
}

impl Dataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut splits = vec![SplitName::Train];
        if self.val().is_some() {
            splits.push(SplitName::Val);
        }
        splits.push(SplitName::Test);
        for &name in &splits {
            let path = dir.join(format!("{name}.csv"));
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_long_csv(BufWriter::new(file), self.split(name)?, self.schema())?;
        }
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            schema: self.schema().clone(),
            splits,
            imputation: self.imputation().clone(),
            missingness: self.missingness().clone(),
            provenance: self.provenance().clone(),
            digest: self.digest(),
        };
        let path = dir.join("dataset.json");
        let json = serde_json::to_string_pretty(&header).expect("header serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("dataset.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let header: Header = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(Error::Format(format!(
                "{}: expected {FORMAT} v{VERSION}, found {} v{}",
                path.display(),
                header.format,
                header.version
            )));
        }
        let read = |name: SplitName| ingest_csv(&dir.join(format!("{name}.csv")), &header.schema, Layout::Long);
        let train = read(SplitName::Train)?;
        let val = if header.splits.contains(&SplitName::Val) {
            Some(read(SplitName::Val)?)
        } else {
            None
        };
        let test = read(SplitName::Test)?;
        let ds = Dataset::from_parts(
            header.schema,
            train,
            val,
            test,
            header.imputation,
            header.missingness,
            header.provenance,
        )?;
        if ds.digest() != header.digest {
            return Err(Error::Format(format!(
                "{}: content digest does not match the archive header",
                dir.display()
            )));
        }
        Ok(ds)
    }
}
