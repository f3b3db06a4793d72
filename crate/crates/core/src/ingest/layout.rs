//! On-disk dataset layout.
//!
//! ```text
//! <root>/manifest.txt                      slide_id=<id> patient_id=<id> gleason_score=<6..10|->
//! <root>/<patient_id>__<slide_id>/r<row>_c<col>.png
//! ```
//!
//! Split manifests hold one `slide_id=<id> split=<train|test>` record per line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::RgbImage;

use super::{Patch, Slide};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
const MANIFEST_HEADER: &str = "# slide manifest v1";
const SPLIT_HEADER: &str = "# split manifest v1";

pub fn slide_dir_name(slide: &Slide) -> String {
    format!("{}__{}", slide.patient_id, slide.slide_id)
}

fn check_identifier(kind: &str, id: &str) -> Result<()> {
    if id.is_empty() || id.contains("__") || id.chars().any(|c| c.is_whitespace() || c == '=' || c == '/') {
        return Err(Error::InvalidInput(format!("{kind} `{id}` is not a valid identifier")));
    }
    Ok(())
}

/// Key-value tokens of one record line.
pub(crate) fn parse_record(line: &str, line_no: usize) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for tok in line.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected key=value, got `{tok}`"),
        })?;
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate key `{k}`"),
            });
        }
    }
    Ok(out)
}

fn take(rec: &mut BTreeMap<String, String>, key: &str, line: usize) -> Result<String> {
    rec.remove(key).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing `{key}`"),
    })
}

/// Write slides in the standard layout. Creates `root` if needed.
pub fn write_dataset(root: &Path, slides: &[Slide]) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    for s in slides {
        check_identifier("slide_id", &s.slide_id)?;
        check_identifier("patient_id", &s.patient_id)?;
        let score = s.gleason_score.map_or("-".to_string(), |g| g.to_string());
        manifest.push_str(&format!(
            "slide_id={} patient_id={} gleason_score={score}\n",
            s.slide_id, s.patient_id
        ));
        let dir = root.join(slide_dir_name(s));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for p in &s.patches {
            let path = dir.join(format!("r{}_c{}.png", p.grid_pos.0, p.grid_pos.1));
            p.pixels.save(&path).map_err(|source| Error::Image { path, source })?;
        }
    }
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| Error::io(path, e))
}

fn parse_tile_name(name: &str) -> Option<(u32, u32)> {
    let stem = name.strip_suffix(".png")?;
    let (r, c) = stem.strip_prefix('r')?.split_once("_c")?;
    Some((r.parse().ok()?, c.parse().ok()?))
}

/// Read every `r<row>_c<col>.png` tile of one slide directory, in grid order.
pub fn read_slide_dir(dir: &Path, slide_id: &str) -> Result<Vec<Patch>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::data(dir, format!("cannot read slide directory: {e}")))?;
    let mut tiles = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(pos) = parse_tile_name(&name) {
            tiles.push((pos, entry.path()));
        }
    }
    tiles.sort();
    tiles
        .into_iter()
        .map(|(pos, path)| {
            let img: RgbImage = image::open(&path)
                .map_err(|source| Error::Image {
                    path: path.clone(),
                    source,
                })?
                .to_rgb8();
            Patch::new(img, pos, slide_id)
        })
        .collect()
}

/// Load a dataset written by [`write_dataset`] (or by hand in the same layout).
pub fn read_dataset(root: &Path) -> Result<Vec<Slide>> {
    let path = root.join(MANIFEST_FILE);
    if !root.is_dir() {
        return Err(Error::data(root, "dataset directory does not exist"));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::data(&path, format!("cannot read manifest: {e}")))?;
    let mut slides = Vec::new();
    let mut size = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut rec = parse_record(line, line_no)?;
        let slide_id = take(&mut rec, "slide_id", line_no)?;
        let patient_id = take(&mut rec, "patient_id", line_no)?;
        let score = take(&mut rec, "gleason_score", line_no)?;
        if let Some(k) = rec.keys().next() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unknown key `{k}`"),
            });
        }
        let gleason = match score.as_str() {
            "-" => None,
            s => Some(s.parse::<u8>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad gleason_score `{s}`"),
            })?),
        };
        let dir = root.join(format!("{patient_id}__{slide_id}"));
        let patches = read_slide_dir(&dir, &slide_id)?;
        for p in &patches {
            let dims = p.pixels.dimensions();
            if *size.get_or_insert(dims) != dims {
                return Err(Error::data(&dir, format!("patch size {dims:?} differs from {:?}", size.unwrap())));
            }
        }
        slides.push(Slide::new(slide_id, patient_id, gleason, patches)?);
    }
    Ok(slides)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub slide_id: String,
    pub train: bool,
}

impl SplitAssignment {
    pub fn new(slide_id: &str, train: bool) -> Self {
        SplitAssignment {
            slide_id: slide_id.to_string(),
            train,
        }
    }
}

pub fn write_split_manifest(path: &Path, assignments: &[SplitAssignment]) -> Result<()> {
    let mut text = String::from(SPLIT_HEADER);
    text.push('\n');
    for a in assignments {
        text.push_str(&format!(
            "slide_id={} split={}\n",
            a.slide_id,
            if a.train { "train" } else { "test" }
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_split_manifest(path: &Path) -> Result<Vec<SplitAssignment>> {
    let text = fs::read_to_string(path).map_err(|e| Error::data(path, format!("cannot read split manifest: {e}")))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut rec = parse_record(line, i + 1)?;
        let slide_id = take(&mut rec, "slide_id", i + 1)?;
        let train = match take(&mut rec, "split", i + 1)?.as_str() {
            "train" => true,
            "test" => false,
            other => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("split must be train or test, got `{other}`"),
                })
            }
        };
        out.push(SplitAssignment { slide_id, train });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn dataset_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = RgbImage::new(8, 8);
        img.put_pixel(3, 4, Rgb([1, 2, 3]));
        let a = Slide::new(
            "A1",
            "P1",
            Some(8),
            vec![
                Patch::new(img.clone(), (0, 1), "A1").unwrap(),
                Patch::new(img.clone(), (1, 0), "A1").unwrap(),
            ],
        )
        .unwrap();
        let b = Slide::new("B1", "P2", None, vec![Patch::new(img, (0, 0), "B1").unwrap()]).unwrap();
        write_dataset(dir.path(), &[a.clone(), b.clone()]).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn missing_dataset_is_a_data_error() {
        let err = read_dataset(Path::new("/definitely/not/here")).unwrap_err();
        assert!(matches!(err, Error::Data { .. }));
    }

    #[test]
    fn split_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.txt");
        let a = vec![SplitAssignment::new("x", true), SplitAssignment::new("y", false)];
        write_split_manifest(&path, &a).unwrap();
        assert_eq!(read_split_manifest(&path).unwrap(), a);
    }

    #[test]
    fn tile_names_parse() {
        assert_eq!(parse_tile_name("r3_c12.png"), Some((3, 12)));
        assert_eq!(parse_tile_name("thumb.png"), None);
    }
}
