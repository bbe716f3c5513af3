//! Candidate regions: 8-connected components of the thresholded fused map.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::BoundingBox;
use crate::grid::{BinaryMask, ScalarGrid};

/// Pixels of one 8-connected component, in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// Splits the set pixels into maximal 8-connected components, ordered by the
/// row-major position of each component's first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let dims = mask.dims();
    let (w, h) = (dims.width, dims.height);
    let mut seen = vec![false; dims.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();

    for start in 0..dims.len() {
        if !mask.bits()[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let (x, y) = (i % w, i / w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask.bits()[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        members.sort_unstable();
        out.push(Component {
            pixels: members.into_iter().map(|i| (i % w, i / w)).collect(),
        });
    }
    out
}

/// Keeps components with at least `min_area` pixels.
pub fn filter_min_area(components: Vec<Component>, min_area: usize) -> Vec<Component> {
    components.into_iter().filter(|c| c.area() >= min_area).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRegion {
    pub id: usize,
    #[serde(skip)]
    pub pixels: Vec<(usize, usize)>,
    pub area: usize,
    pub centroid: (f64, f64),
    pub mean_prob: f64,
    pub bbox: BoundingBox,
    /// `|C ∩ control| / |C|`.
    pub overlap_with_control: f64,
}

impl CandidateRegion {
    /// `mean_prob * sqrt(area)`, the case-level stability score.
    pub fn stability_score(&self) -> f64 {
        self.mean_prob * (self.area as f64).sqrt()
    }
}

pub fn describe(
    id: usize,
    component: &Component,
    p_final: &ScalarGrid,
    control_mask: &BinaryMask,
) -> Result<CandidateRegion> {
    p_final.dims().ensure_same(control_mask.dims())?;
    let area = component.area();
    assert!(area > 0, "components are never empty");
    let (mut sx, mut sy, mut sp) = (0.0, 0.0, 0.0);
    let mut inside = 0usize;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for &(x, y) in &component.pixels {
        sx += x as f64;
        sy += y as f64;
        sp += p_final.get(x, y);
        if control_mask.get(x, y) {
            inside += 1;
        }
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x + 1);
        y1 = y1.max(y + 1);
    }
    let n = area as f64;
    Ok(CandidateRegion {
        id,
        pixels: component.pixels.clone(),
        area,
        centroid: (sx / n, sy / n),
        mean_prob: sp / n,
        bbox: BoundingBox::new(x0, y0, x1, y1),
        overlap_with_control: inside as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Dims, Spacing};
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, rows: &[&str]) -> BinaryMask {
        let bits = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        BinaryMask::new(Dims::new(w, h), bits).unwrap()
    }

    #[test]
    fn empty_mask_has_no_components() {
        assert!(connected_components(&BinaryMask::empty(Dims::new(5, 5))).is_empty());
    }

    #[test]
    fn diagonal_touch_is_one_component() {
        let m = mask(3, 3, &["#..", ".#.", "..#"]);
        let cs = connected_components(&m);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].pixels, vec![(0, 0), (1, 1), (2, 2)]);
        let anti = mask(2, 2, &[".#", "#."]);
        assert_eq!(connected_components(&anti).len(), 1);
    }

    #[test]
    fn ordering_by_first_pixel() {
        let m = mask(6, 4, &["....##", "#.....", "#..#..", "...#.."]);
        let cs = connected_components(&m);
        let firsts: Vec<_> = cs.iter().map(|c| c.pixels[0]).collect();
        assert_eq!(firsts, vec![(4, 0), (0, 1), (3, 2)]);
    }

    #[test]
    fn min_area_filter() {
        let comps = vec![
            Component {
                pixels: (0..49).map(|x| (x, 0)).collect(),
            },
            Component {
                pixels: (50..100).map(|x| (x, 0)).collect(),
            },
        ];
        let kept = filter_min_area(comps.clone(), 50);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].area(), 50);
        assert_eq!(filter_min_area(comps.clone(), 0), comps);
    }

    #[test]
    fn describe_square() {
        let d = Dims::new(4, 4);
        let p = ScalarGrid::from_fn(d, Spacing::default(), |x, y| match (x, y) {
            (1, 1) => 0.4,
            (2, 1) => 0.6,
            (1, 2) | (2, 2) => 0.5,
            _ => 0.0,
        })
        .unwrap();
        let comp = Component {
            pixels: vec![(1, 1), (2, 1), (1, 2), (2, 2)],
        };
        let inside = BinaryMask::full(d);
        let c = describe(0, &comp, &p, &inside).unwrap();
        assert!((c.mean_prob - 0.5).abs() < 1e-15);
        assert_eq!(c.area, 4);
        assert_eq!(c.centroid, (1.5, 1.5));
        assert_eq!(c.bbox, BoundingBox::new(1, 1, 3, 3));
        assert_eq!(c.overlap_with_control, 1.0);
        let outside = describe(0, &comp, &p, &BinaryMask::empty(d)).unwrap();
        assert_eq!(outside.overlap_with_control, 0.0);
        let half = BinaryMask::from_pixels(d, &[(1, 1), (2, 1)]);
        assert_eq!(describe(0, &comp, &p, &half).unwrap().overlap_with_control, 0.5);
    }

    fn random_mask() -> impl Strategy<Value = BinaryMask> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), w * h)
                .prop_map(move |b| BinaryMask::new(Dims::new(w, h), b).unwrap())
        })
    }

    proptest! {
        #[test]
        fn components_partition_foreground(m in random_mask(), min_area in 0usize..5) {
            let cs = connected_components(&m);
            let total: usize = cs.iter().map(Component::area).sum();
            prop_assert_eq!(total, m.count());
            let mut seen = BinaryMask::empty(m.dims());
            for c in &cs {
                for &(x, y) in &c.pixels {
                    prop_assert!(m.get(x, y));
                    prop_assert!(!seen.get(x, y));
                    seen.set(x, y, true);
                }
            }
            let kept = filter_min_area(cs.clone(), min_area);
            for k in &kept {
                prop_assert!(cs.contains(k));
                prop_assert!(k.area() >= min_area);
            }
        }

        #[test]
        fn candidate_invariants(m in random_mask()) {
            let d = m.dims();
            let p = ScalarGrid::from_fn(d, Spacing::default(), |x, y| ((x * 13 + y * 7) % 10) as f64 / 10.0).unwrap();
            for (i, comp) in connected_components(&m).iter().enumerate() {
                let c = describe(i, comp, &p, &m).unwrap();
                prop_assert_eq!(c.area, c.pixels.len());
                prop_assert!(c.centroid.0 >= c.bbox.x0 as f64 && c.centroid.0 < c.bbox.x1 as f64);
                prop_assert!(c.centroid.1 >= c.bbox.y0 as f64 && c.centroid.1 < c.bbox.y1 as f64);
                prop_assert!((0.0..=1.0).contains(&c.mean_prob));
            }
        }
    }
}
