//! Dataset directory layout with matching basenames per record:
//!
//! ```text
//! root/
//!   images/     <base>.png   RGB image
//!   normals/    <base>.png   encoded surface normals
//!   cast/       <base>.png   cast shadow mask
//!   attached/   <base>.png   attached shadow mask
//!   undefined/  <base>.png   undefined shadow mask
//!   objects/    <base>.png   foreground object mask
//!   light/      <base>.txt   light direction record
//!   depth/      <base>.pfm   relative depth (written by the synthesizer)
//! ```
//!
//! A missing `undefined/` file reads as an empty mask, since predictions
//! carry no undefined class.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io;
use crate::oracle::LabelBundle;
use crate::raster::{BinaryMask, TriClassMask};

#[derive(Debug, Clone)]
pub struct DatasetLayout {
    root: PathBuf,
}

const MASK_DIRS: [&str; 4] = ["cast", "attached", "undefined", "objects"];

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Creates the root and every subdirectory.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let layout = Self::new(root);
        for dir in ["images", "normals", "light", "depth"]
            .iter()
            .chain(MASK_DIRS.iter())
        {
            let path = layout.root.join(dir);
            fs::create_dir_all(&path).map_err(|e| Error::Io { path, source: e })?;
        }
        Ok(layout)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn image_path(&self, base: &str) -> PathBuf {
        self.root.join("images").join(format!("{base}.png"))
    }

    pub fn normals_path(&self, base: &str) -> PathBuf {
        self.root.join("normals").join(format!("{base}.png"))
    }

    pub fn mask_path(&self, dir: &str, base: &str) -> PathBuf {
        self.root.join(dir).join(format!("{base}.png"))
    }

    pub fn light_path(&self, base: &str) -> PathBuf {
        self.root.join("light").join(format!("{base}.txt"))
    }

    pub fn depth_path(&self, base: &str) -> PathBuf {
        self.root.join("depth").join(format!("{base}.pfm"))
    }

    /// Sorted basenames found in the cast mask directory.
    pub fn basenames(&self) -> Result<Vec<String>> {
        let dir = self.root.join("cast");
        let entries = fs::read_dir(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let mut names = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) == Some("png") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    names.push(stem.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }
}

/// Writes every part of a rendered bundle under the layout.
pub fn save_bundle(layout: &DatasetLayout, base: &str, bundle: &LabelBundle) -> Result<()> {
    io::save_rgb_image(&bundle.image, &layout.image_path(base))?;
    io::save_normals(&bundle.normals, &layout.normals_path(base))?;
    io::save_mask(
        &bundle.gt.class_mask(crate::raster::ShadowClass::Cast),
        &layout.mask_path("cast", base),
    )?;
    io::save_mask(
        &bundle.gt.class_mask(crate::raster::ShadowClass::Attached),
        &layout.mask_path("attached", base),
    )?;
    io::save_mask(bundle.gt.undefined(), &layout.mask_path("undefined", base))?;
    io::save_mask(&bundle.object_mask, &layout.mask_path("objects", base))?;
    io::save_light(&bundle.light, &layout.light_path(base))?;
    io::save_depth_pfm(bundle.depth.grid(), &layout.depth_path(base))?;
    Ok(())
}

/// Loads the tri-class mask of one record. `undefined/` may be absent.
pub fn load_tri_mask(layout: &DatasetLayout, base: &str) -> Result<TriClassMask> {
    let cast = io::load_mask(&layout.mask_path("cast", base))?;
    let attached = io::load_mask(&layout.mask_path("attached", base))?;
    let undefined_path = layout.mask_path("undefined", base);
    let undefined = if undefined_path.exists() {
        io::load_mask(&undefined_path)?
    } else {
        BinaryMask::new(cast.width(), cast.height())
    };
    // Undefined ownership wins over specific labels on disk.
    let cast = cast.and(&undefined.complement());
    let attached = attached.and(&undefined.complement());
    TriClassMask::from_masks(&cast, &attached, &undefined)
}

pub fn load_object_mask(layout: &DatasetLayout, base: &str) -> Result<BinaryMask> {
    io::load_mask(&layout.mask_path("objects", base))
}
