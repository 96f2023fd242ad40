use super::{Box2D, ImagingError, Mask, Result, SliceSample, Volume};
use crate::stats::percentile;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum NormalizeMethod {
    MinMax,
    /// Clamp to the `[lo, hi]` percentiles (in percent) before min-max.
    PercentileClip { lo: f64, hi: f64 },
}

impl Default for NormalizeMethod {
    fn default() -> Self {
        NormalizeMethod::PercentileClip { lo: 1.0, hi: 99.0 }
    }
}

/// The intensity window that was mapped onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizeParams {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceInclusion {
    /// Only axial slices whose mask cross-section is nonzero.
    #[default]
    MaskNonzero,
    All,
}

fn has_two_values(v: &[f64]) -> bool {
    v.first().is_some_and(|&x0| v.iter().any(|&x| x != x0))
}

/// Maps intensities onto [0, 1] with a monotone non-decreasing transform.
pub fn normalize_intensity(v: &Volume, method: NormalizeMethod) -> Result<Volume> {
    normalize_with_params(v, method).map(|(out, _)| out)
}

pub fn normalize_with_params(v: &Volume, method: NormalizeMethod) -> Result<(Volume, NormalizeParams)> {
    if v.is_empty() {
        return Err(ImagingError::InvalidVolume("empty volume".into()));
    }
    if !has_two_values(&v.voxels) {
        return Err(ImagingError::ConstantVolume);
    }
    let (lo, hi) = match method {
        NormalizeMethod::MinMax => v
            .voxels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x))),
        NormalizeMethod::PercentileClip { lo, hi } => {
            if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
                return Err(ImagingError::InvalidVolume(format!(
                    "percentile window [{lo}, {hi}] is invalid"
                )));
            }
            (percentile(&v.voxels, lo), percentile(&v.voxels, hi))
        }
    };
    if !(hi > lo) {
        return Err(ImagingError::ConstantVolume);
    }
    let range = hi - lo;
    let voxels = v
        .voxels
        .iter()
        .map(|&x| ((x.clamp(lo, hi) - lo) / range).clamp(0.0, 1.0))
        .collect();
    let out = Volume { voxels, ..v.clone() };
    Ok((out, NormalizeParams { lo, hi }))
}

/// Tight in-plane rectangle around the union of nonzero pixels over all slices.
pub fn gland_bounding_box(m: &Mask) -> Result<Box2D> {
    let [nx, ny, nz] = m.dims;
    let mut b: Option<Box2D> = None;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !m.get(x, y, z) {
                    continue;
                }
                b = Some(match b {
                    None => Box2D { x_min: x, x_max: x, y_min: y, y_max: y },
                    Some(b) => Box2D {
                        x_min: b.x_min.min(x),
                        x_max: b.x_max.max(x),
                        y_min: b.y_min.min(y),
                        y_max: b.y_max.max(y),
                    },
                });
            }
        }
    }
    b.ok_or(ImagingError::EmptyMask)
}

pub fn crop_box(v: &Volume, b: Box2D) -> Volume {
    let [nx, ny, nz] = v.dims;
    assert!(b.x_max < nx && b.y_max < ny, "crop box {b:?} outside {nx}x{ny}");
    let (w, h) = (b.width(), b.height());
    let mut voxels = Vec::with_capacity(w * h * nz);
    for z in 0..nz {
        for y in b.y_min..=b.y_max {
            let row = v.index(b.x_min, y, z);
            voxels.extend_from_slice(&v.voxels[row..row + w]);
        }
    }
    Volume { voxels, dims: [w, h, nz], ..v.clone() }
}

pub fn crop_mask(m: &Mask, b: Box2D) -> Mask {
    let [nx, ny, nz] = m.dims;
    assert!(b.x_max < nx && b.y_max < ny, "crop box {b:?} outside {nx}x{ny}");
    let (w, h) = (b.width(), b.height());
    let mut voxels = Vec::with_capacity(w * h * nz);
    for z in 0..nz {
        for y in b.y_min..=b.y_max {
            let row = b.x_min + nx * (y + ny * z);
            voxels.extend_from_slice(&m.voxels[row..row + w]);
        }
    }
    Mask { dims: [w, h, nz], voxels }
}

/// Crops every slice to the gland box grown by `margin` pixels per side.
pub fn crop_to_gland(v: &Volume, m: &Mask, margin: usize) -> Result<Volume> {
    m.check_pair(v)?;
    let b = gland_bounding_box(m)?.expand(margin, v.dims[0], v.dims[1]);
    Ok(crop_box(v, b))
}

/// Bilinear resize of a row-major `w × h` image to `size × size`
/// (pixel-centre alignment, edge clamped).
pub fn resize_bilinear(src: &[f64], w: usize, h: usize, size: usize) -> Vec<f64> {
    assert_eq!(src.len(), w * h);
    let map = |dst: usize, n_src: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * n_src as f64 / size as f64 - 0.5).clamp(0.0, (n_src - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_src - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..size).map(|x| map(x, w)).collect();
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let (y0, y1, fy) = map(y, h);
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Emits one resized sample per included axial slice of a cropped volume.
/// `m` is the mask of the uncropped volume; only its z extent is used.
pub fn extract_slices(
    v: &Volume,
    m: &Mask,
    target_age: f64,
    input_size: usize,
    inclusion: SliceInclusion,
) -> Result<Vec<SliceSample>> {
    if m.dims[2] != v.dims[2] {
        return Err(ImagingError::DimensionMismatch { volume: v.dims, mask: m.dims });
    }
    if m.count_nonzero() == 0 {
        return Err(ImagingError::EmptyMask);
    }
    if input_size == 0 {
        return Err(ImagingError::InvalidVolume("input_size must be positive".into()));
    }
    let [w, h, nz] = v.dims;
    Ok((0..nz)
        .filter(|&z| inclusion == SliceInclusion::All || m.slice_nonzero(z))
        .map(|z| {
            let pixels = resize_bilinear(v.slice(z), w, h, input_size)
                .into_iter()
                .map(|p| p.clamp(0.0, 1.0))
                .collect();
            SliceSample {
                patient_id: v.patient_id.clone(),
                slice_index: z,
                target_age,
                size: input_size,
                pixels,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vol(dims: [usize; 3], voxels: Vec<f64>) -> Volume {
        Volume::new("p", dims, [0.5, 0.5, 3.0], voxels).unwrap()
    }

    fn mask_with(dims: [usize; 3], on: &[(usize, usize, usize)]) -> Mask {
        let mut voxels = vec![0u8; dims.iter().product()];
        for &(x, y, z) in on {
            voxels[x + dims[0] * (y + dims[1] * z)] = 1;
        }
        Mask::new(dims, voxels).unwrap()
    }

    #[test]
    fn minmax_linear_map() {
        let v = vol([3, 1, 1], vec![2.0, 4.0, 6.0]);
        let out = normalize_intensity(&v, NormalizeMethod::MinMax).unwrap();
        assert_eq!(out.voxels, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_volume_rejected() {
        let v = vol([2, 2, 1], vec![5.0; 4]);
        for m in [NormalizeMethod::MinMax, NormalizeMethod::default()] {
            assert!(matches!(normalize_intensity(&v, m), Err(ImagingError::ConstantVolume)));
        }
    }

    #[test]
    fn percentile_clip_matches_sorted_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>().powi(3) * 1000.0 - 50.0).collect();
        let v = vol([100, 100, 1], data.clone());
        let out = normalize_intensity(&v, NormalizeMethod::PercentileClip { lo: 1.0, hi: 99.0 }).unwrap();

        let mut sorted = data.clone();
        sorted.sort_by(f64::total_cmp);
        let pct = |s: &[f64], p: f64| {
            let h = (s.len() - 1) as f64 * p / 100.0;
            let k = h.floor() as usize;
            if k + 1 >= s.len() {
                s[k]
            } else {
                s[k] + (h - k as f64) * (s[k + 1] - s[k])
            }
        };
        let (lo, hi) = (pct(&sorted, 1.0), pct(&sorted, 99.0));
        let mapped: Vec<f64> = sorted.iter().map(|&x| (x.clamp(lo, hi) - lo) / (hi - lo)).collect();
        let mut out_sorted = out.voxels.clone();
        out_sorted.sort_by(f64::total_cmp);
        for p in [0.0, 0.5, 1.0, 5.0, 25.0, 50.0, 75.0, 95.0, 99.0, 99.5, 100.0] {
            assert!((pct(&out_sorted, p) - pct(&mapped, p)).abs() < 1e-9, "p = {p}");
        }
        assert!(pct(&out_sorted, 0.0) == 0.0 && pct(&out_sorted, 100.0) == 1.0);
        assert!(out.voxels.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn bbox_single_pixel() {
        let m = mask_with([32, 32, 3], &[(10, 20, 2)]);
        assert_eq!(
            gland_bounding_box(&m).unwrap(),
            Box2D { x_min: 10, x_max: 10, y_min: 20, y_max: 20 }
        );
    }

    #[test]
    fn bbox_is_union_across_slices() {
        let mut on = vec![];
        on.extend((50..=79).map(|x| (x, 30, 0)));
        on.extend((60..=90).map(|x| (x, 40, 5)));
        let m = mask_with([128, 64, 6], &on);
        let b = gland_bounding_box(&m).unwrap();
        assert_eq!((b.x_min, b.x_max), (50, 90));
        assert_eq!((b.y_min, b.y_max), (30, 40));
    }

    #[test]
    fn empty_mask_rejected() {
        let m = mask_with([8, 8, 2], &[]);
        assert!(matches!(gland_bounding_box(&m), Err(ImagingError::EmptyMask)));
        let v = vol([8, 8, 2], vec![0.0; 128]);
        assert!(matches!(crop_to_gland(&v, &m, 40), Err(ImagingError::EmptyMask)));
        assert!(matches!(
            extract_slices(&v, &m, 60.0, 16, SliceInclusion::All),
            Err(ImagingError::EmptyMask)
        ));
    }

    #[test]
    fn crop_margin_arithmetic_and_clamp() {
        let m = mask_with([256, 256, 1], &[(50, 60, 0), (79, 99, 0)]);
        let v = vol([256, 256, 1], (0..65536).map(f64::from).collect());
        let out = crop_to_gland(&v, &m, 40).unwrap();
        assert_eq!(out.dims, [110, 120, 1]);
        assert_eq!(out.voxels[0], v.get(10, 20, 0));
        assert_eq!(*out.voxels.last().unwrap(), v.get(119, 139, 0));

        let b = Box2D { x_min: 5, x_max: 20, y_min: 100, y_max: 120 }.expand(40, 256, 256);
        assert_eq!(b.x_min, 0);
        let b = Box2D { x_min: 5, x_max: 250, y_min: 0, y_max: 255 }.expand(40, 256, 256);
        assert_eq!((b.x_max, b.y_min, b.y_max), (255, 0, 255));
    }

    #[test]
    fn zero_margin_is_tight_box() {
        let m = mask_with([16, 16, 2], &[(3, 4, 0), (9, 7, 1)]);
        let v = vol([16, 16, 2], (0..512).map(f64::from).collect());
        let out = crop_to_gland(&v, &m, 0).unwrap();
        assert_eq!(out.dims, [7, 4, 2]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = mask_with([8, 8, 2], &[(1, 1, 1)]);
        let v = vol([8, 7, 2], vec![0.0; 112]);
        assert!(matches!(crop_to_gland(&v, &m, 4), Err(ImagingError::DimensionMismatch { .. })));
    }

    #[test]
    fn slice_count_follows_mask() {
        let on: Vec<_> = (4..=18).map(|z| (5, 5, z)).collect();
        let m = mask_with([12, 12, 20], &on);
        let v = vol([12, 12, 20], (0..2880).map(|i| (i % 7) as f64 / 6.0).collect());
        let slices = extract_slices(&v, &m, 64.0, 16, SliceInclusion::MaskNonzero).unwrap();
        assert_eq!(slices.len(), 15);
        assert_eq!(slices[0].slice_index, 4);
        assert!(slices.iter().all(|s| s.target_age == 64.0 && s.pixels.len() == 256));
        let all = extract_slices(&v, &m, 64.0, 16, SliceInclusion::All).unwrap();
        assert_eq!(all.len(), 20);
    }

    #[test]
    fn resize_to_fixed_side_keeps_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src: Vec<f64> = (0..110 * 120).map(|_| rng.random::<f64>()).collect();
        let out = resize_bilinear(&src, 110, 120, 128);
        assert_eq!(out.len(), 128 * 128);
        assert!(out.iter().all(|x| (0.0..=1.0).contains(x)));
        let c = resize_bilinear(&vec![0.375; 110 * 120], 110, 120, 128);
        assert!(c.iter().all(|&x| x == 0.375));
    }

    #[test]
    fn resize_identity_at_same_size() {
        let src: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
        assert_eq!(resize_bilinear(&src, 8, 8, 8), src);
    }

    proptest! {
        #[test]
        fn minmax_is_idempotent(data in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            prop_assume!(has_two_values(&data));
            let v = vol([data.len(), 1, 1], data);
            let once = normalize_intensity(&v, NormalizeMethod::MinMax).unwrap();
            let twice = normalize_intensity(&once, NormalizeMethod::MinMax).unwrap();
            for (a, b) in once.voxels.iter().zip(&twice.voxels) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn normalization_is_monotone(data in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            prop_assume!(has_two_values(&data));
            let v = vol([data.len(), 1, 1], data.clone());
            let out = normalize_intensity(&v, NormalizeMethod::default()).unwrap();
            for i in 0..data.len() {
                for j in 0..data.len() {
                    if data[i] <= data[j] {
                        prop_assert!(out.voxels[i] <= out.voxels[j]);
                    }
                }
            }
        }

        #[test]
        fn crop_keeps_every_mask_pixel(
            pts in prop::collection::vec((0usize..24, 0usize..20, 0usize..3), 1..12),
            margin in 0usize..30,
        ) {
            let m = mask_with([24, 20, 3], &pts);
            let b = gland_bounding_box(&m).unwrap().expand(margin, 24, 20);
            for &(x, y, _) in &pts {
                prop_assert!(b.contains(x, y));
            }
            let v = vol([24, 20, 3], (0..1440).map(f64::from).collect());
            let c = crop_to_gland(&v, &m, margin).unwrap();
            let cm = crop_mask(&m, b);
            prop_assert_eq!(cm.count_nonzero(), m.count_nonzero());
            // a second tight crop with the cropped mask changes nothing when margin = 0
            if margin == 0 {
                prop_assert_eq!(crop_to_gland(&c, &cm, 0).unwrap(), c);
            }
        }
    }
}
