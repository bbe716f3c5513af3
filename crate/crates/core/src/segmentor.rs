//! The frozen text-conditioned segmentor, behind a trait.
//!
//! A request names an image, a prompt, an optional crop and the view in which
//! the input was presented. Backends answer with a probability map in the
//! presented geometry (cropped, then transformed); undoing the view is the
//! caller's job.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fusion::{apply_view, ViewTransform};
use crate::geometry::BoundingBox;
use crate::grid::{Dims, ScalarGrid};
use crate::synthetic::{render_synthetic, PromptKind, SyntheticSceneSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentorRequest {
    pub image_id: String,
    pub prompt: String,
    pub crop: Option<BoundingBox>,
    pub transform: ViewTransform,
}

impl SegmentorRequest {
    pub fn full(image_id: &str, prompt: &str) -> Self {
        Self {
            image_id: image_id.to_owned(),
            prompt: prompt.to_owned(),
            crop: None,
            transform: ViewTransform::Identity,
        }
    }
}

pub trait Segmentor: Send + Sync {
    fn segment(&self, request: &SegmentorRequest) -> Result<ScalarGrid>;

    /// Frame size of a known image.
    fn frame(&self, image_id: &str) -> Option<Dims>;
}

fn present(full: &ScalarGrid, request: &SegmentorRequest) -> Result<ScalarGrid> {
    let cropped = match &request.crop {
        Some(b) => full.crop(b)?,
        None => full.clone(),
    };
    Ok(apply_view(&cropped, request.transform))
}

/// Serves precomputed full-frame maps keyed by `(image_id, prompt)`.
/// Crops are sub-grids of the stored map; views flip the result as if the
/// flipped input had been segmented by an equivariant model.
#[derive(Debug, Default, Clone)]
pub struct FileSegmentor {
    maps: HashMap<(String, String), ScalarGrid>,
}

impl FileSegmentor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image_id: &str, prompt: &str, map: ScalarGrid) -> Result<()> {
        map.validate_probability()
            .map_err(|e| e.context(format!("map for ({image_id}, {prompt})")))?;
        self.maps.insert((image_id.to_owned(), prompt.to_owned()), map);
        Ok(())
    }
}

impl Segmentor for FileSegmentor {
    fn segment(&self, request: &SegmentorRequest) -> Result<ScalarGrid> {
        let key = (request.image_id.clone(), request.prompt.clone());
        let full = self.maps.get(&key).ok_or_else(|| Error::UnknownMap {
            image_id: request.image_id.clone(),
            prompt: request.prompt.clone(),
        })?;
        present(full, request)
    }

    fn frame(&self, image_id: &str) -> Option<Dims> {
        self.maps
            .iter()
            .find(|((id, _), _)| id == image_id)
            .map(|(_, g)| g.dims())
    }
}

struct SyntheticImage {
    organ_prompts: Vec<String>,
    tumor_prompt: String,
    organ: ScalarGrid,
    tumor: ScalarGrid,
}

/// Renders each registered scene once and answers requests from the cache.
#[derive(Default)]
pub struct SyntheticSegmentor {
    images: HashMap<String, SyntheticImage>,
}

impl SyntheticSegmentor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        image_id: &str,
        scene: &SyntheticSceneSpec,
        organ_prompts: &[String],
        tumor_prompt: &str,
    ) -> Result<()> {
        self.images.insert(
            image_id.to_owned(),
            SyntheticImage {
                organ_prompts: organ_prompts.to_vec(),
                tumor_prompt: tumor_prompt.to_owned(),
                organ: render_synthetic(scene, PromptKind::Organ)?,
                tumor: render_synthetic(scene, PromptKind::Tumor)?,
            },
        );
        Ok(())
    }
}

impl Segmentor for SyntheticSegmentor {
    fn segment(&self, request: &SegmentorRequest) -> Result<ScalarGrid> {
        let unknown = || Error::UnknownMap {
            image_id: request.image_id.clone(),
            prompt: request.prompt.clone(),
        };
        let img = self.images.get(&request.image_id).ok_or_else(unknown)?;
        let full = if request.prompt == img.tumor_prompt {
            &img.tumor
        } else if img.organ_prompts.contains(&request.prompt) {
            &img.organ
        } else {
            return Err(unknown());
        };
        present(full, request)
    }

    fn frame(&self, image_id: &str) -> Option<Dims> {
        self.images.get(image_id).map(|i| i.tumor.dims())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Spacing;
    use crate::synthetic::Blob;

    fn stored() -> ScalarGrid {
        ScalarGrid::from_fn(Dims::new(32, 24), Spacing::default(), |x, y| {
            ((x * 7 + y * 3) % 11) as f64 / 10.0
        })
        .unwrap()
    }

    fn backend() -> FileSegmentor {
        let mut f = FileSegmentor::new();
        f.insert("img7", "segment the liver", stored()).unwrap();
        f
    }

    #[test]
    fn file_backend_pass_through() {
        let out = backend()
            .segment(&SegmentorRequest::full("img7", "segment the liver"))
            .unwrap();
        assert_eq!(out, stored());
    }

    #[test]
    fn file_backend_crop_is_sub_grid() {
        let b = BoundingBox::new(10, 10, 20, 20);
        let mut req = SegmentorRequest::full("img7", "segment the liver");
        req.crop = Some(b);
        let out = backend().segment(&req).unwrap();
        assert_eq!(out.dims(), Dims::new(10, 10));
        let s = stored();
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(out.get(x, y), s.get(x + 10, y + 10));
            }
        }
        // Identical requests are bit-identical.
        assert_eq!(out, backend().segment(&req).unwrap());
    }

    #[test]
    fn file_backend_flip_presents_flipped_map() {
        let mut req = SegmentorRequest::full("img7", "segment the liver");
        req.transform = ViewTransform::FlipLr;
        let out = backend().segment(&req).unwrap();
        assert_eq!(apply_view(&out, ViewTransform::FlipLr), stored());
    }

    #[test]
    fn unknown_key_names_it() {
        let err = backend()
            .segment(&SegmentorRequest::full("img7", "segment the spleen"))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("img7") && msg.contains("segment the spleen"), "{msg}");
        assert!(backend()
            .segment(&SegmentorRequest::full("img8", "segment the liver"))
            .is_err());
    }

    #[test]
    fn crop_outside_frame_rejected() {
        let mut req = SegmentorRequest::full("img7", "segment the liver");
        req.crop = Some(BoundingBox::new(20, 0, 40, 5));
        assert!(backend().segment(&req).is_err());
    }

    #[test]
    fn synthetic_backend_blob_peak() {
        let mut scene = SyntheticSceneSpec::empty(Dims::new(64, 64));
        scene.noise_floor = 0.05;
        scene.lesion_blobs.push(Blob {
            center: (32.0, 32.0),
            radius: 5.0,
            peak: 0.9,
        });
        let mut s = SyntheticSegmentor::new();
        s.register("a", &scene, &["organ".into()], "tumor").unwrap();
        let m = s.segment(&SegmentorRequest::full("a", "tumor")).unwrap();
        assert!((m.max_value() - 0.9).abs() < 1e-6);
        assert!((m.get(32, 32) - 0.9).abs() < 1e-6);
        assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(s.segment(&SegmentorRequest::full("a", "spleen")).is_err());
        assert_eq!(s.frame("a"), Some(Dims::new(64, 64)));
    }
}
