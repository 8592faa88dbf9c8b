//! On-disk dataset manifests and a mask store that audits annotation reads.

use std::cell::{Cell, RefCell};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm;
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, GrayImage};
use crate::synth::{Dataset, Split};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Lung,
    Lesion,
}

/// One sample. Paths are relative to the manifest directory; the optional
/// fields are filled in by later phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub id: String,
    pub split: Split,
    pub image: String,
    pub mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_lung: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupted: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<String>,
}

impl Entry {
    pub fn new(id: &str, split: Split) -> Self {
        Self {
            id: id.to_string(),
            split,
            image: format!("images/{id}.pgm"),
            mask: format!("masks/{id}.pgm"),
            raw_lung: None,
            candidate: None,
            corrupted: None,
            coverage: None,
            label: None,
            score: None,
            accepted: None,
            constraint: None,
        }
    }

    /// Drops everything derived by the constraint phase.
    pub fn clear_constraint_fields(&mut self) {
        self.coverage = None;
        self.label = None;
        self.score = None;
        self.accepted = None;
        self.constraint = None;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub kind: DatasetKind,
    pub height: usize,
    pub width: usize,
    pub config_fingerprint: String,
    pub entries: Vec<Entry>,
}

fn check_relative(p: &str) -> Result<()> {
    let path = Path::new(p);
    let ok = !p.is_empty() && path.components().all(|c| matches!(c, Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(Error::Manifest(format!("path `{p}` must be relative and stay inside the dataset")))
    }
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!("unsupported version {}", self.version)));
        }
        if self.entries.is_empty() {
            return Err(Error::Manifest("no entries".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id `{}`", e.id)));
            }
            for p in [Some(&e.image), Some(&e.mask), e.raw_lung.as_ref(), e.candidate.as_ref(), e.constraint.as_ref()]
                .into_iter()
                .flatten()
            {
                check_relative(p)?;
            }
            if let Some(c) = e.coverage {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::Manifest(format!("coverage {c} of `{}` outside [0, 1]", e.id)));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest is serialisable");
        s.push('\n');
        s
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(MANIFEST_FILE), &self.to_json())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes images, masks and the manifest of a generated dataset.
pub fn write_dataset(dir: &Path, data: &Dataset, kind: DatasetKind, fingerprint: &str) -> Result<Manifest> {
    let mut entries = Vec::with_capacity(data.samples.len());
    for s in &data.samples {
        let e = Entry::new(&s.id, s.split);
        pgm::write_image(&dir.join(&e.image), &s.image)?;
        pgm::write_mask(&dir.join(&e.mask), &s.mask)?;
        entries.push(e);
    }
    let m = Manifest {
        version: MANIFEST_VERSION,
        kind,
        height: data.height,
        width: data.width,
        config_fingerprint: fingerprint.to_string(),
        entries,
    };
    m.save(dir)?;
    Ok(m)
}

/// A record of one annotation read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskAccess {
    pub id: String,
    pub split: Split,
    pub purpose: String,
}

/// Dataset directory plus its manifest. Test-split annotations stay locked
/// until [`DatasetStore::open_evaluation`] is called.
#[derive(Debug)]
pub struct DatasetStore {
    root: PathBuf,
    pub manifest: Manifest,
    log: RefCell<Vec<MaskAccess>>,
    evaluation_open: Cell<bool>,
}

impl DatasetStore {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest = Manifest::load(root)?;
        for e in &manifest.entries {
            for rel in [Some(&e.image), Some(&e.mask), e.raw_lung.as_ref(), e.candidate.as_ref(), e.constraint.as_ref()]
                .into_iter()
                .flatten()
            {
                if !root.join(rel).is_file() {
                    return Err(Error::Manifest(format!("`{}` references missing file {rel}", e.id)));
                }
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            log: RefCell::new(Vec::new()),
            evaluation_open: Cell::new(false),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn check_shape(&self, (h, w): (usize, usize), rel: &str) -> Result<()> {
        if (h, w) != (self.manifest.height, self.manifest.width) {
            return Err(Error::Format {
                path: self.path(rel),
                reason: format!(
                    "shape {h}x{w} differs from manifest {}x{}",
                    self.manifest.height, self.manifest.width
                ),
            });
        }
        Ok(())
    }

    pub fn image(&self, e: &Entry) -> Result<GrayImage> {
        let img = pgm::read_image(&self.path(&e.image))?;
        self.check_shape(img.shape(), &e.image)?;
        Ok(img)
    }

    fn read_mask(&self, rel: &str) -> Result<BinaryMask> {
        let m = pgm::read_mask(&self.path(rel))?;
        self.check_shape(m.shape(), rel)?;
        Ok(m)
    }

    /// Reads an annotation, refusing test-split reads before evaluation.
    pub fn mask(&self, e: &Entry, purpose: &str) -> Result<BinaryMask> {
        if e.split == Split::Test && !self.evaluation_open.get() {
            return Err(Error::Leakage(format!(
                "test annotation `{}` requested for {purpose} before evaluation",
                e.id
            )));
        }
        self.log.borrow_mut().push(MaskAccess {
            id: e.id.clone(),
            split: e.split,
            purpose: purpose.to_string(),
        });
        self.read_mask(&e.mask)
    }

    pub fn open_evaluation(&self) {
        self.evaluation_open.set(true);
    }

    pub fn access_log(&self) -> Vec<MaskAccess> {
        self.log.borrow().clone()
    }

    /// The access log in read order, one `id,split,purpose` row per read.
    pub fn access_csv(&self) -> String {
        let mut s = String::from("id,split,purpose\n");
        for a in self.log.borrow().iter() {
            s.push_str(&format!("{},{},{}\n", a.id, a.split.as_str(), a.purpose));
        }
        s
    }

    fn derived(&self, e: &Entry, rel: &Option<String>, what: &str, phase: &str) -> Result<BinaryMask> {
        match rel {
            Some(r) => self.read_mask(r),
            None => Err(Error::Manifest(format!(
                "`{}` has no {what}; run {phase} first",
                e.id
            ))),
        }
    }

    pub fn candidate(&self, e: &Entry) -> Result<BinaryMask> {
        self.derived(e, &e.candidate, "candidate constraint", "phase1")
    }

    pub fn raw_lung(&self, e: &Entry) -> Result<BinaryMask> {
        self.derived(e, &e.raw_lung, "raw lung mask", "phase1")
    }

    pub fn constraint(&self, e: &Entry) -> Result<BinaryMask> {
        self.derived(e, &e.constraint, "final constraint", "phase2")
    }

    pub fn write_mask(&self, rel: &str, m: &BinaryMask) -> Result<()> {
        pgm::write_mask(&self.path(rel), m)
    }

    pub fn save(&self) -> Result<()> {
        self.manifest.validate()?;
        self.manifest.save(&self.root)
    }
}
