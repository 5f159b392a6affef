use std::sync::OnceLock;

use rayon::prelude::*;

use super::{band_rank, band_weight, normalized_frequency, region_weight, FusionParams};
use crate::confidence::ConfidenceMap;
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::transforms::{
    dct2, dwt2, idct2, idwt2, stitch8, tile8, DctSpectrum, TileGrid, Wavelet, WaveletPyramid, TILE,
};

/// Decomposition depth of each 8x8 patch.
pub const TILE_LEVELS: usize = 3;

/// Largest full-image DWT depth.
const MAX_GLOBAL_LEVELS: usize = 4;

fn blend_into(out: &mut ImagePlane, deep: &ImagePlane, weight: f64) {
    for (o, &d) in out.data_mut().iter_mut().zip(deep.data()) {
        *o = weight * d + (1.0 - weight) * *o;
    }
}

fn blend_pyramids(
    deep: &WaveletPyramid,
    reliable: &WaveletPyramid,
    weight_of: impl Fn(Option<usize>) -> f64,
) -> WaveletPyramid {
    let mut out = reliable.clone();
    blend_into(&mut out.approximation, &deep.approximation, weight_of(None));
    for (level, (bands, deep_bands)) in out.details.iter_mut().zip(&deep.details).enumerate() {
        let wb = weight_of(Some(level + 1));
        for (band, deep_band) in bands.iter_mut().zip(deep_bands.iter()) {
            blend_into(band, deep_band, wb);
        }
    }
    out
}

fn endpoint(deep: &ImagePlane, reliable: &ImagePlane, w: f64) -> Option<ImagePlane> {
    if w <= 0.0 {
        Some(reliable.clone())
    } else if w >= 1.0 {
        Some(deep.clone())
    } else {
        None
    }
}

/// DCT fusion with both spectra computed once.
#[derive(Clone, Debug)]
pub struct DctFusion {
    deep: ImagePlane,
    reliable: ImagePlane,
    deep_spec: DctSpectrum,
    reliable_spec: DctSpectrum,
}

impl DctFusion {
    pub fn new(deep: &ImagePlane, reliable: &ImagePlane) -> Result<Self> {
        deep.ensure_same_dims(reliable)?;
        Ok(Self {
            deep_spec: dct2(deep),
            reliable_spec: dct2(reliable),
            deep: deep.clone(),
            reliable: reliable.clone(),
        })
    }

    pub fn fuse(&self, params: &FusionParams) -> Result<ImagePlane> {
        params.validate()?;
        if let Some(img) = endpoint(&self.deep, &self.reliable, params.w) {
            return Ok(img);
        }
        let (w, h) = self.deep.dims();
        let mut spec = self.reliable_spec.clone();
        let fy: Vec<f64> = (0..h).map(|v| normalized_frequency(v, h).powi(2)).collect();
        let fx: Vec<f64> = (0..w).map(|u| normalized_frequency(u, w).powi(2)).collect();
        let deep = self.deep_spec.coeffs();
        for (i, c) in spec.coeffs_mut().iter_mut().enumerate() {
            let m = super::frequency_weight(params.w, fx[i % w] + fy[i / w], params.a, params.eps);
            *c = m * deep[i] + (1.0 - m) * *c;
        }
        Ok(idct2(&spec))
    }
}

/// Full-image multi-level DWT fusion.
#[derive(Clone, Debug)]
pub struct DwtFusion {
    deep: ImagePlane,
    reliable: ImagePlane,
    deep_pyr: WaveletPyramid,
    reliable_pyr: WaveletPyramid,
}

impl DwtFusion {
    /// Depth used for a `width x height` image: `min(4, floor(log2(min side)))`.
    pub fn levels_for(width: usize, height: usize) -> usize {
        let side = width.min(height).max(1);
        (side.ilog2() as usize).min(MAX_GLOBAL_LEVELS)
    }

    pub fn new(deep: &ImagePlane, reliable: &ImagePlane, wavelet: Wavelet) -> Result<Self> {
        deep.ensure_same_dims(reliable)?;
        let (w, h) = deep.dims();
        let levels = Self::levels_for(w, h);
        Ok(Self {
            deep_pyr: dwt2(deep, levels, wavelet)?,
            reliable_pyr: dwt2(reliable, levels, wavelet)?,
            deep: deep.clone(),
            reliable: reliable.clone(),
        })
    }

    pub fn levels(&self) -> usize {
        self.deep_pyr.levels()
    }

    pub fn wavelet(&self) -> Wavelet {
        self.deep_pyr.wavelet
    }

    pub fn fuse(&self, params: &FusionParams) -> Result<ImagePlane> {
        params.validate()?;
        if let Some(img) = endpoint(&self.deep, &self.reliable, params.w) {
            return Ok(img);
        }
        let levels = self.levels();
        let pyr = blend_pyramids(&self.deep_pyr, &self.reliable_pyr, |level| {
            band_weight(params.w, params.schedule, band_rank(level, levels), params)
        });
        idwt2(&pyr)
    }
}

/// Patch-wise Haar fusion over the 8x8 grid, with optional per-region
/// confidence modulation.
#[derive(Clone, Debug)]
pub struct TiledDwtFusion {
    deep: ImagePlane,
    reliable: ImagePlane,
    cols: usize,
    rows: usize,
    tiles: Vec<(WaveletPyramid, WaveletPyramid)>,
}

impl TiledDwtFusion {
    pub fn new(deep: &ImagePlane, reliable: &ImagePlane) -> Result<Self> {
        deep.ensure_same_dims(reliable)?;
        deep.ensure_min_size(TILE)?;
        let deep_grid = tile8(&deep.pad_to_multiple(TILE))?;
        let reliable_grid = tile8(&reliable.pad_to_multiple(TILE))?;
        let tiles = deep_grid
            .tiles
            .par_iter()
            .zip(reliable_grid.tiles.par_iter())
            .map(|(d, r)| {
                Ok((
                    dwt2(d, TILE_LEVELS, Wavelet::Haar)?,
                    dwt2(r, TILE_LEVELS, Wavelet::Haar)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            deep: deep.clone(),
            reliable: reliable.clone(),
            cols: deep_grid.cols,
            rows: deep_grid.rows,
            tiles,
        })
    }

    /// Confidence grid size expected by [`TiledDwtFusion::fuse`].
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    /// Effective weight of every region in row-major order.
    pub fn region_weights(&self, conf: Option<&ConfidenceMap>, params: &FusionParams) -> Result<Vec<f64>> {
        match conf {
            None => Ok(vec![params.w; self.tiles.len()]),
            Some(map) => {
                if map.dims() != self.grid_dims() {
                    return Err(Error::mismatch(self.grid_dims(), map.dims()));
                }
                Ok(map
                    .values()
                    .iter()
                    .map(|&c| region_weight(params.w, c, params.t))
                    .collect())
            }
        }
    }

    pub fn fuse(&self, conf: Option<&ConfidenceMap>, params: &FusionParams) -> Result<ImagePlane> {
        params.validate()?;
        let weights = self.region_weights(conf, params)?;
        if let Some(img) = endpoint(&self.deep, &self.reliable, params.w) {
            return Ok(img);
        }
        let tiles = self
            .tiles
            .par_iter()
            .zip(weights.par_iter())
            .map(|((d, r), &wr)| {
                let pyr = blend_pyramids(d, r, |level| {
                    band_weight(wr, params.schedule, band_rank(level, TILE_LEVELS), params)
                });
                idwt2(&pyr)
            })
            .collect::<Result<Vec<_>>>()?;
        let grid = TileGrid {
            cols: self.cols,
            rows: self.rows,
            tiles,
        };
        let (w, h) = self.deep.dims();
        Ok(stitch8(&grid)?.crop(w, h))
    }
}

type Cell<T> = OnceLock<std::result::Result<T, String>>;

fn init<T>(cell: &Cell<T>, make: impl FnOnce() -> Result<T>) -> Result<&T> {
    cell.get_or_init(|| make().map_err(|e| e.to_string()))
        .as_ref()
        .map_err(|e| Error::InvalidParameter(e.clone()))
}

/// All engines for one deep/reliable pair, each built on first use.
///
/// Shared by the batch harness and the service so both produce identical
/// pixels for identical parameters.
#[derive(Debug)]
pub struct Fuser {
    deep: ImagePlane,
    reliable: ImagePlane,
    dct: Cell<DctFusion>,
    dwt: [Cell<DwtFusion>; 2],
    tiled: Cell<TiledDwtFusion>,
}

impl Fuser {
    pub fn new(deep: ImagePlane, reliable: ImagePlane) -> Result<Self> {
        deep.ensure_same_dims(&reliable)?;
        deep.ensure_min_size(TILE)?;
        Ok(Self {
            deep,
            reliable,
            dct: OnceLock::new(),
            dwt: [OnceLock::new(), OnceLock::new()],
            tiled: OnceLock::new(),
        })
    }

    pub fn deep(&self) -> &ImagePlane {
        &self.deep
    }

    pub fn reliable(&self) -> &ImagePlane {
        &self.reliable
    }

    /// Fuses with `params.mode`; the map is only used by the confidence path.
    pub fn fuse(&self, conf: Option<&ConfidenceMap>, params: &FusionParams) -> Result<ImagePlane> {
        match params.mode {
            super::FusionMode::Dct => init(&self.dct, || DctFusion::new(&self.deep, &self.reliable))?.fuse(params),
            super::FusionMode::Dwt => {
                let slot = match params.wavelet {
                    Wavelet::Haar => &self.dwt[0],
                    Wavelet::Db2 => &self.dwt[1],
                };
                init(slot, || DwtFusion::new(&self.deep, &self.reliable, params.wavelet))?.fuse(params)
            }
            super::FusionMode::DwtConf => {
                init(&self.tiled, || TiledDwtFusion::new(&self.deep, &self.reliable))?.fuse(conf, params)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use proptest::prelude::*;

    fn texture(w: usize, h: usize, seed: u64) -> ImagePlane {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ImagePlane::from_fn(w, h, |x, y| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let n = (s >> 40) as f64 / (1u64 << 24) as f64;
            128.0 + 60.0 * ((x as f64) * 0.3).sin() + 30.0 * ((y as f64) * 0.17).cos() + 20.0 * n
        })
    }

    fn pair(w: usize, h: usize) -> (ImagePlane, ImagePlane) {
        (texture(w, h, 1), texture(w, h, 2))
    }

    fn all_modes() -> Vec<FusionParams> {
        let base = FusionParams::default();
        let mut out = Vec::new();
        for mode in FusionMode::ALL {
            for schedule in [Schedule::Uniform, Schedule::LowFirst] {
                out.push(FusionParams { mode, schedule, ..base });
            }
        }
        out
    }

    #[test]
    fn endpoints_exact_in_every_mode() {
        let (d, r) = pair(40, 24);
        let conf = ConfidenceMap::uniform(5, 3, 0.3).unwrap();
        for p in all_modes() {
            assert_eq!(fuse(&d, &r, Some(&conf), &p.with_w(0.0)).unwrap(), r);
            assert_eq!(fuse(&d, &r, Some(&conf), &p.with_w(1.0)).unwrap(), d);
            assert_eq!(fuse(&d, &r, None, &p.with_w(1.0)).unwrap(), d);
        }
    }

    #[test]
    fn dct_identical_inputs() {
        let (d, _) = pair(32, 16);
        for w in [0.2, 0.5, 0.9] {
            let out = fuse_dct(&d, &d, &FusionParams::default().with_w(w)).unwrap();
            assert!(out.max_abs_diff(&d) < 1e-9);
        }
    }

    #[test]
    fn dct_constant_inputs() {
        let d = ImagePlane::filled(16, 16, 200.0);
        let r = ImagePlane::filled(16, 16, 100.0);
        // Only the DC coefficient is nonzero and its weight is 1 for any w > 0.
        let out = fuse_dct(&d, &r, &FusionParams::default().with_w(0.3)).unwrap();
        assert!(out.max_abs_diff(&d) < 1e-9);
    }

    #[test]
    fn dct_oracle_against_explicit_mask() {
        let (d, r) = pair(16, 8);
        let p = FusionParams::default().with_w(0.4);
        let mask = dct_fusion_mask(16, 8, &p).unwrap();
        let (sd, sr) = (dct2(&d), dct2(&r));
        let coeffs = (0..16 * 8)
            .map(|i| mask.weights[i] * sd.coeffs()[i] + (1.0 - mask.weights[i]) * sr.coeffs()[i])
            .collect();
        let expect = idct2(&DctSpectrum::new(16, 8, coeffs).unwrap());
        assert!(fuse_dct(&d, &r, &p).unwrap().max_abs_diff(&expect) < 1e-9);
    }

    #[test]
    fn uniform_schedule_is_alpha_blend() {
        let (d, r) = pair(64, 48);
        for wavelet in [Wavelet::Haar, Wavelet::Db2] {
            let p = FusionParams {
                schedule: Schedule::Uniform,
                wavelet,
                ..FusionParams::default().with_w(0.37)
            };
            let blend = d.zip_map(&r, |a, b| 0.37 * a + 0.63 * b).unwrap();
            assert!(fuse_dwt(&d, &r, &p).unwrap().max_abs_diff(&blend) < 1e-6);
            assert!(fuse_dwt_tiled(&d, &r, &p).unwrap().max_abs_diff(&blend) < 1e-6);
        }
    }

    #[test]
    fn global_levels() {
        assert_eq!(DwtFusion::levels_for(512, 512), 4);
        assert_eq!(DwtFusion::levels_for(8, 100), 3);
        assert_eq!(DwtFusion::levels_for(9, 9), 3);
    }

    #[test]
    fn ragged_sizes_keep_dims() {
        let (d, r) = pair(37, 21);
        let conf = ConfidenceMap::uniform(5, 3, 0.9).unwrap();
        for p in all_modes() {
            let out = fuse(&d, &r, Some(&conf), &p.with_w(0.6)).unwrap();
            assert_eq!(out.dims(), (37, 21));
        }
    }

    #[test]
    fn confidence_at_threshold_matches_unguided() {
        let (d, r) = pair(32, 32);
        let p = FusionParams::default().with_w(0.45).with_mode(FusionMode::DwtConf);
        let conf = ConfidenceMap::uniform(4, 4, p.t).unwrap();
        let guided = fuse(&d, &r, Some(&conf), &p).unwrap();
        let plain = fuse(&d, &r, None, &p).unwrap();
        assert!(guided.max_abs_diff(&plain) < 1e-12);
    }

    #[test]
    fn region_locality() {
        let (d, r) = pair(32, 32);
        let p = FusionParams::default().with_w(0.5).with_mode(FusionMode::DwtConf);
        let base = ConfidenceMap::uniform(4, 4, 0.5).unwrap();
        let mut values = base.values().to_vec();
        values[5] = 1.0;
        let bumped = ConfidenceMap::new(4, 4, values).unwrap();
        let a = fuse(&d, &r, Some(&base), &p).unwrap();
        let b = fuse(&d, &r, Some(&bumped), &p).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let inside = x / 8 == 1 && y / 8 == 1;
                if !inside {
                    assert_eq!(a.get(x, y), b.get(x, y));
                }
            }
        }
        assert!(a.max_abs_diff(&b) > 0.0);
    }

    #[test]
    fn full_confidence_region_takes_more_deep() {
        let (d, r) = pair(16, 16);
        let p = FusionParams::default().with_w(0.5).with_mode(FusionMode::DwtConf);
        let lo = fuse(&d, &r, Some(&ConfidenceMap::uniform(2, 2, 0.0).unwrap()), &p).unwrap();
        let hi = fuse(&d, &r, Some(&ConfidenceMap::uniform(2, 2, 1.0).unwrap()), &p).unwrap();
        let err = |img: &ImagePlane| img.zip_map(&d, |a, b| (a - b).powi(2)).unwrap().mean();
        assert!(err(&hi) < err(&lo));
    }

    #[test]
    fn wrong_confidence_grid() {
        let (d, r) = pair(32, 32);
        let p = FusionParams::default().with_mode(FusionMode::DwtConf);
        let conf = ConfidenceMap::uniform(3, 4, 0.5).unwrap();
        assert!(matches!(
            fuse(&d, &r, Some(&conf), &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fuser_matches_free_functions() {
        let (d, r) = pair(40, 32);
        let conf = ConfidenceMap::uniform(5, 4, 0.95).unwrap();
        let fuser = Fuser::new(d.clone(), r.clone()).unwrap();
        for p in all_modes() {
            for w in [0.0, 0.3, 0.75, 1.0] {
                let p = p.with_w(w);
                assert_eq!(
                    fuser.fuse(Some(&conf), &p).unwrap(),
                    fuse(&d, &r, Some(&conf), &p).unwrap()
                );
            }
        }
        let db2 = FusionParams {
            wavelet: Wavelet::Db2,
            ..FusionParams::default().with_mode(FusionMode::Dwt)
        };
        assert_eq!(fuser.fuse(None, &db2).unwrap(), fuse_dwt(&d, &r, &db2).unwrap());
    }

    #[test]
    fn mismatched_inputs() {
        let d = ImagePlane::zeros(16, 16);
        let r = ImagePlane::zeros(16, 24);
        for p in all_modes() {
            assert!(fuse(&d, &r, None, &p).is_err());
        }
    }

    fn plane_strategy() -> impl Strategy<Value = (ImagePlane, ImagePlane)> {
        (1usize..5, 1usize..5, any::<u64>())
            .prop_map(|(cw, ch, seed)| (texture(cw * 8, ch * 8, seed), texture(cw * 8, ch * 8, seed ^ 0xabcdef)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn fused_identical_inputs_unchanged((d, _) in plane_strategy(), w in 0.0f64..=1.0) {
            for p in all_modes() {
                let out = fuse(&d, &d, None, &p.with_w(w)).unwrap();
                prop_assert!(out.max_abs_diff(&d) < 1e-8);
            }
        }

        #[test]
        fn fusion_linear_in_inputs((d, r) in plane_strategy(), w in 0.0f64..=1.0, k in -3.0f64..3.0) {
            for p in all_modes() {
                let p = p.with_w(w);
                let a = fuse(&d, &r, None, &p).unwrap();
                let ds = d.map(|v| k * v);
                let rs = r.map(|v| k * v);
                let b = fuse(&ds, &rs, None, &p).unwrap();
                prop_assert!(b.max_abs_diff(&a.map(|v| k * v)) < 1e-7);
            }
        }

        #[test]
        fn uniform_blend_within_bounds((d, r) in plane_strategy(), w in 0.0f64..=1.0) {
            let p = FusionParams { schedule: Schedule::Uniform, ..FusionParams::default().with_w(w) };
            let out = fuse_dwt(&d, &r, &p).unwrap();
            for ((&o, &a), &b) in out.data().iter().zip(d.data()).zip(r.data()) {
                prop_assert!(o >= a.min(b) - 1e-6 && o <= a.max(b) + 1e-6);
            }
        }
    }
}
