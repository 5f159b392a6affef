//! Orthonormal 2-D DCT-II, multi-level 2-D DWT and 8x8 tiling.

mod dct;
mod dwt;
mod tile;

pub use dct::{dct2, idct2, DctSpectrum};
pub use dwt::{dwt2, idwt2, DetailBands, Wavelet, WaveletPyramid};
pub use tile::{stitch8, tile8, TileGrid, TILE};
