//! DCBF binary and CSV dataset files.
//!
//! DCBF layout (all little-endian):
//!
//! ```text
//! "DCBF" | u32 version=1 | u64 n | u32 d | u8 has_truth | u8 has_pseudo
//! n*d f64 row-major features
//! [n i32 truth labels]   if has_truth
//! [n i32 pseudo labels]  if has_pseudo
//! ```
//!
//! CSV: optional header, `d` numeric columns, and an optional trailing
//! integer column that must be named `label` in the header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{DatasetBundle, FeatureMatrix, LabelVector};
use crate::error::{Error, Result};

pub const DCBF_MAGIC: &[u8; 4] = b"DCBF";
pub const DCBF_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Dcbf,
    Csv,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dcbf" => Ok(Self::Dcbf),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Config(format!("unknown format {other:?} (expected dcbf or csv)"))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<DatasetBundle> {
    match format {
        DataFormat::Dcbf => read_dcbf(&mut BufReader::new(File::open(path)?)),
        DataFormat::Csv => read_csv(BufReader::new(File::open(path)?)),
    }
}

pub fn save_dataset(bundle: &DatasetBundle, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        DataFormat::Dcbf => write_dcbf(bundle, &mut w)?,
        DataFormat::Csv => write_csv(bundle, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn write_labels<W: Write>(w: &mut W, labels: &LabelVector) -> Result<()> {
    for &l in labels.labels() {
        let v = i32::try_from(l).map_err(|_| Error::Value(format!("label {l} exceeds i32")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn write_dcbf<W: Write>(bundle: &DatasetBundle, w: &mut W) -> Result<()> {
    let f = &bundle.features;
    let d = u32::try_from(f.d()).map_err(|_| Error::Shape("d exceeds u32".into()))?;
    w.write_all(DCBF_MAGIC)?;
    w.write_all(&DCBF_VERSION.to_le_bytes())?;
    w.write_all(&(f.n() as u64).to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    w.write_all(&[u8::from(bundle.truth.is_some()), u8::from(bundle.pseudo.is_some())])?;
    for v in f.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    if let Some(t) = &bundle.truth {
        write_labels(w, t)?;
    }
    if let Some(p) = &bundle.pseudo {
        write_labels(w, p)?;
    }
    Ok(())
}

fn read_exact<const N: usize, R: Read>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Shape(format!("file truncated while reading {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_labels<R: Read>(r: &mut R, n: usize, what: &str) -> Result<LabelVector> {
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let v = i32::from_le_bytes(read_exact::<4, _>(r, what)?);
        let l = usize::try_from(v).map_err(|_| Error::Value(format!("negative {what} label {v}")))?;
        labels.push(l);
    }
    Ok(LabelVector::from_labels(labels))
}

pub(crate) fn read_dcbf<R: Read>(r: &mut R) -> Result<DatasetBundle> {
    let magic = read_exact::<4, _>(r, "magic")?;
    if &magic != DCBF_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", String::from_utf8_lossy(&magic))));
    }
    let version = u32::from_le_bytes(read_exact::<4, _>(r, "version")?);
    if version != DCBF_VERSION {
        return Err(Error::Format(format!("unsupported DCBF version {version}")));
    }
    let n = usize::try_from(u64::from_le_bytes(read_exact::<8, _>(r, "n")?))
        .map_err(|_| Error::Format("n does not fit in memory".into()))?;
    let d = u32::from_le_bytes(read_exact::<4, _>(r, "d")?) as usize;
    let [has_truth, has_pseudo] = read_exact::<2, _>(r, "flags")?;
    if has_truth > 1 || has_pseudo > 1 {
        return Err(Error::Format("label flags must be 0 or 1".into()));
    }
    let count = n
        .checked_mul(d)
        .ok_or_else(|| Error::Format("n*d overflows".into()))?;
    let mut data = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        data.push(f64::from_le_bytes(read_exact::<8, _>(r, "features")?));
    }
    let features = FeatureMatrix::new(n, d, data)?;
    let truth = (has_truth == 1).then(|| read_labels(r, n, "truth")).transpose()?;
    let pseudo = (has_pseudo == 1).then(|| read_labels(r, n, "pseudo")).transpose()?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Shape("trailing bytes after DCBF payload".into()));
    }
    DatasetBundle::new(features, truth, pseudo)
}

fn write_csv<W: Write>(bundle: &DatasetBundle, w: &mut W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let d = bundle.features.d();
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    if bundle.truth.is_some() {
        header.push("label".into());
    }
    wr.write_record(&header)?;
    for i in 0..bundle.n() {
        let mut rec: Vec<String> = bundle.features.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        if let Some(t) = &bundle.truth {
            rec.push(t.get(i).to_string());
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

fn read_csv<R: Read>(r: R) -> Result<DatasetBundle> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(r);
    let mut records = rdr.records();
    let Some(first) = records.next().transpose()? else {
        return Err(Error::Format("empty CSV file".into()));
    };
    let first_numeric = first.iter().all(|f| f.parse::<f64>().is_ok());
    let (has_label, mut pending) = if first_numeric {
        (false, Some(first))
    } else {
        (first.iter().next_back() == Some("label"), None)
    };

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut d: Option<usize> = None;
    let mut line = if first_numeric { 1 } else { 2 };
    loop {
        let rec = match pending.take() {
            Some(r) => r,
            None => match records.next().transpose()? {
                Some(r) => r,
                None => break,
            },
        };
        let fields: Vec<&str> = rec.iter().collect();
        let nfeat = if has_label { fields.len().saturating_sub(1) } else { fields.len() };
        match d {
            None => d = Some(nfeat),
            Some(d) if d != nfeat => {
                return Err(Error::Shape(format!("line {line}: {nfeat} feature columns, expected {d}")));
            }
            _ => {}
        }
        for f in &fields[..nfeat] {
            let v: f64 = f.parse().map_err(|_| Error::Value(format!("line {line}: not a number: {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::Value(format!("line {line}: non-finite value {f:?}")));
            }
            data.push(v);
        }
        if has_label {
            let f = fields[nfeat];
            let l: usize = f.parse().map_err(|_| Error::Value(format!("line {line}: bad label {f:?}")))?;
            labels.push(l);
        }
        line += 1;
    }
    let d = d.ok_or_else(|| Error::Format("CSV has no data rows".into()))?;
    let n = data.len() / d.max(1);
    let features = FeatureMatrix::new(n, d, data)?;
    let truth = has_label.then(|| LabelVector::from_labels(labels));
    DatasetBundle::new(features, truth, None)
}
