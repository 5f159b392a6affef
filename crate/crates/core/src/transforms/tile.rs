use crate::error::{Error, Result};
use crate::image::ImagePlane;

pub const TILE: usize = 8;

/// Non-overlapping 8x8 partition of a plane, tiles in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct TileGrid {
    pub cols: usize,
    pub rows: usize,
    pub tiles: Vec<ImagePlane>,
}

pub fn tile8(img: &ImagePlane) -> Result<TileGrid> {
    let (w, h) = img.dims();
    if w % TILE != 0 || h % TILE != 0 {
        return Err(Error::InvalidParameter(format!("cannot tile {w}x{h} into 8x8 blocks")));
    }
    let (cols, rows) = (w / TILE, h / TILE);
    let mut tiles = Vec::with_capacity(cols * rows);
    for ty in 0..rows {
        for tx in 0..cols {
            tiles.push(ImagePlane::from_fn(TILE, TILE, |x, y| {
                img.get(tx * TILE + x, ty * TILE + y)
            }));
        }
    }
    Ok(TileGrid { cols, rows, tiles })
}

pub fn stitch8(grid: &TileGrid) -> Result<ImagePlane> {
    if grid.tiles.len() != grid.cols * grid.rows || grid.tiles.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} tiles for a {}x{} grid",
            grid.tiles.len(),
            grid.cols,
            grid.rows
        )));
    }
    if let Some(bad) = grid.tiles.iter().find(|t| t.dims() != (TILE, TILE)) {
        return Err(Error::mismatch((TILE, TILE), bad.dims()));
    }
    let w = grid.cols * TILE;
    Ok(ImagePlane::from_fn(w, grid.rows * TILE, |x, y| {
        grid.tiles[(y / TILE) * grid.cols + x / TILE].get(x % TILE, y % TILE)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_square() {
        let img = ImagePlane::from_fn(16, 16, |x, y| (x * 100 + y) as f64 + 0.25);
        let grid = tile8(&img).unwrap();
        assert_eq!(grid.tiles.len(), 4);
        assert_eq!(grid.tiles[1].get(0, 0), img.get(8, 0));
        assert_eq!(grid.tiles[2].get(3, 4), img.get(3, 12));
        assert_eq!(stitch8(&grid).unwrap(), img);
    }

    #[test]
    fn single_tile() {
        let img = ImagePlane::from_fn(8, 8, |x, y| (x ^ y) as f64);
        let grid = tile8(&img).unwrap();
        assert_eq!(grid.tiles, vec![img]);
    }

    #[test]
    fn errors() {
        assert!(tile8(&ImagePlane::zeros(12, 8)).is_err());
        let mut grid = tile8(&ImagePlane::zeros(16, 8)).unwrap();
        grid.tiles.pop();
        assert!(stitch8(&grid).is_err());
        let mut grid = tile8(&ImagePlane::zeros(16, 8)).unwrap();
        grid.tiles[0] = ImagePlane::zeros(4, 8);
        assert!(stitch8(&grid).is_err());
    }
}
