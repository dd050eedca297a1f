//! On-disk formats: per-second label CSVs, little-endian feature binaries, and
//! the dataset manifest.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSequence, LabeledSequence, PhaseLabel, Split, Video};
use crate::error::{Result, SwagError};

pub const FEATURE_MAGIC: &[u8; 8] = b"SWAGF1\0\0";

#[derive(Deserialize, Serialize)]
struct LabelRow {
    second: usize,
    phase: usize,
}

/// Parse a `second,phase` CSV. Seconds must run contiguously from 0.
pub fn read_labels<R: Read>(
    reader: R,
    video_id: &str,
    num_phases: usize,
) -> Result<LabeledSequence> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SwagError::format(video_id, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "second" || &headers[1] != "phase" {
        return Err(SwagError::format(
            video_id,
            format!("expected header `second,phase`, found {headers:?}"),
        ));
    }
    let mut labels = Vec::new();
    for row in rdr.deserialize::<LabelRow>() {
        let row = row.map_err(|e| SwagError::format(video_id, e.to_string()))?;
        if row.second != labels.len() {
            return Err(SwagError::format(
                video_id,
                format!("expected second {}, found {}", labels.len(), row.second),
            ));
        }
        labels.push(PhaseLabel(row.phase));
    }
    LabeledSequence::new(video_id, num_phases, labels)
}

pub fn write_labels<W: Write>(writer: W, seq: &LabeledSequence) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (second, phase) in seq.labels().iter().enumerate() {
        wtr.serialize(LabelRow {
            second,
            phase: phase.0,
        })
        .map_err(|e| SwagError::format(seq.video_id(), e.to_string()))?;
    }
    wtr.flush()
        .map_err(|e| SwagError::format(seq.video_id(), e.to_string()))?;
    Ok(())
}

/// Load a label file; the file stem becomes the video id.
pub fn load_labels(path: &Path, num_phases: usize) -> Result<LabeledSequence> {
    let file = fs::File::open(path).map_err(|e| SwagError::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_labels(file, &id, num_phases)
}

pub fn save_labels(path: &Path, seq: &LabeledSequence) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| SwagError::io(path, e))?;
    write_labels(std::io::BufWriter::new(file), seq)
}

pub fn write_features<W: Write>(mut writer: W, features: &FeatureSequence) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * features.as_slice().len());
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&(features.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(features.dim() as u32).to_le_bytes());
    for v in features.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&buf)
}

pub fn read_features(bytes: &[u8], context: &str) -> Result<FeatureSequence> {
    if bytes.len() < 16 || &bytes[..8] != FEATURE_MAGIC {
        return Err(SwagError::format(context, "missing SWAGF1 header"));
    }
    let t = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = t
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| SwagError::format(context, "dimension overflow"))?;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(SwagError::format(
            context,
            format!("expected {expected} payload bytes for {t}x{dim}, found {}", body.len()),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureSequence::new(dim, data).map_err(|e| SwagError::format(context, e.to_string()))
}

pub fn load_features(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(|e| SwagError::io(path, e))?;
    read_features(&bytes, &path.display().to_string())
}

pub fn save_features(path: &Path, features: &FeatureSequence) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| SwagError::io(path, e))?;
    write_features(std::io::BufWriter::new(file), features).map_err(|e| SwagError::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub labels: String,
    pub features: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub num_phases: usize,
    pub feature_dim: usize,
    pub videos: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SwagError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| SwagError::format(path.display().to_string(), e.to_string()))
    }
}

/// Write `manifest.json`, `labels/<id>.csv` and `features/<id>.swagf` under `dir`.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<Manifest> {
    let labels_dir = dir.join("labels");
    let features_dir = dir.join("features");
    for d in [&labels_dir, &features_dir] {
        fs::create_dir_all(d).map_err(|e| SwagError::io(d, e))?;
    }
    let mut videos = Vec::new();
    for split in [Split::Train, Split::Val, Split::Test] {
        for video in dataset.split(split) {
            let labels = format!("labels/{}.csv", video.id());
            let features = format!("features/{}.swagf", video.id());
            save_labels(&dir.join(&labels), &video.labels)?;
            save_features(&dir.join(&features), &video.features)?;
            videos.push(ManifestEntry {
                id: video.id().to_owned(),
                split,
                labels,
                features,
            });
        }
    }
    let manifest = Manifest {
        num_phases: dataset.num_phases,
        feature_dim: dataset.feature_dim().unwrap_or(0),
        videos,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| SwagError::io(&path, e))?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = Manifest::load(&dir.join("manifest.json"))?;
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for entry in &manifest.videos {
        let file = fs::File::open(dir.join(&entry.labels))
            .map_err(|e| SwagError::io(dir.join(&entry.labels), e))?;
        let labels = read_labels(file, &entry.id, manifest.num_phases)?;
        let features = load_features(&dir.join(&entry.features))?;
        if features.dim() != manifest.feature_dim {
            return Err(SwagError::format(
                &entry.id,
                format!(
                    "feature dimension {} disagrees with manifest {}",
                    features.dim(),
                    manifest.feature_dim
                ),
            ));
        }
        let video = Video::new(labels, features)?;
        match entry.split {
            Split::Train => train.push(video),
            Split::Val => val.push(video),
            Split::Test => test.push(video),
        }
    }
    Dataset::new(manifest.num_phases, train, val, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_rows() {
        let csv = "second,phase\n0,0\n1,0\n2,1\n";
        let seq = read_labels(csv.as_bytes(), "v", 7).unwrap();
        assert_eq!(seq.labels(), &[PhaseLabel(0), PhaseLabel(0), PhaseLabel(1)]);
    }

    #[test]
    fn gap_is_format_error() {
        let csv = "second,phase\n0,0\n2,1\n";
        assert!(matches!(
            read_labels(csv.as_bytes(), "v", 7),
            Err(SwagError::Format { .. })
        ));
    }

    #[test]
    fn phase_out_of_range_is_domain_error() {
        let csv = "second,phase\n0,9\n";
        assert!(matches!(
            read_labels(csv.as_bytes(), "v", 8),
            Err(SwagError::Domain(_))
        ));
        // EOS is never stored.
        let csv = "second,phase\n0,7\n";
        assert!(matches!(
            read_labels(csv.as_bytes(), "v", 7),
            Err(SwagError::Domain(_))
        ));
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(read_labels("t,p\n0,0\n".as_bytes(), "v", 7).is_err());
    }

    #[test]
    fn truncated_features_rejected() {
        let f = FeatureSequence::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write_features(&mut buf, &f).unwrap();
        assert_eq!(read_features(&buf, "f").unwrap(), f);
        assert!(read_features(&buf[..buf.len() - 1], "f").is_err());
        assert!(read_features(b"SWAGF2\0\0\0\0\0\0\0\0\0\0", "f").is_err());
    }

    proptest! {
        #[test]
        fn labels_round_trip(labels in proptest::collection::vec(0usize..7, 1..200)) {
            let seq = LabeledSequence::from_indices("v", 7, &labels).unwrap();
            let mut buf = Vec::new();
            write_labels(&mut buf, &seq).unwrap();
            prop_assert_eq!(read_labels(buf.as_slice(), "v", 7).unwrap(), seq);
        }

        #[test]
        fn features_round_trip(rows in 1usize..20, dim in 1usize..6, seed in any::<u32>()) {
            let data: Vec<f32> = (0..rows * dim)
                .map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 / 1e6)
                .collect();
            let f = FeatureSequence::new(dim, data).unwrap();
            let mut buf = Vec::new();
            write_features(&mut buf, &f).unwrap();
            prop_assert_eq!(read_features(&buf, "f").unwrap(), f);
        }
    }
}
