//! 1 m land-use raster: construction from prioritized vector layers,
//! point classification, and binary/PGM serialization.
//!
//! The raster is stored as one byte per fine cell in tiles of one
//! coarse cell (250 x 250 bytes by default). Tiles are allocated lazily
//! on first non-zero write, so a mostly-empty study area costs a few
//! pointers rather than gigabytes; untouched tiles read as code 0.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::geom::{GeomError, Polygon};
use crate::grid::{ClassTable, GridError, GridSpec, LandUseClass};

/// One vector input layer: a (multi)polygon painted with a class at a
/// priority. Higher priority overwrites lower; among equal priorities
/// the later-listed layer wins.
#[derive(Debug, Clone)]
pub struct LayerSource {
    pub polygons: Vec<Polygon>,
    pub class: LandUseClass,
    pub priority: i32,
}

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("invalid geometry in layer {layer}: {source}")]
    InvalidGeometry { layer: usize, source: GeomError },
    #[error("invalid layer class {0} for the configured class table")]
    InvalidClass(u8),
    #[error("grid too large: raster tiles need {required} bytes, cap is {cap}")]
    GridTooLarge { required: usize, cap: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("raster file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Rasterization knobs. `memory_cap_bytes` bounds total tile
/// allocation; `threads` bounds the row-band worker count.
#[derive(Debug, Clone, Copy)]
pub struct RasterizeOptions {
    pub memory_cap_bytes: usize,
    pub threads: usize,
    pub classes: ClassTable,
}

impl Default for RasterizeOptions {
    fn default() -> Self {
        RasterizeOptions {
            memory_cap_bytes: 1 << 30,
            threads: 1,
            classes: ClassTable::default(),
        }
    }
}

/// Row-major tiled byte raster over a [`GridSpec`].
#[derive(Debug)]
pub struct LandUseRaster {
    spec: GridSpec,
    tile: u32,
    tiles: Vec<Option<Box<[u8]>>>,
}

impl LandUseRaster {
    fn empty(spec: GridSpec) -> Self {
        let tile = spec.fine_per_coarse();
        let n = spec.coarse_cols as usize * spec.coarse_rows as usize;
        LandUseRaster {
            spec,
            tile,
            tiles: (0..n).map(|_| None).collect(),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Class of the 1 m cell containing (x, y); code 0 outside the extent.
    pub fn classify_point(&self, x: f64, y: f64) -> LandUseClass {
        match self.spec.fine_index(x, y) {
            Some((col, row)) => LandUseClass(self.cell_code(col, row)),
            None => LandUseClass::BACKGROUND,
        }
    }

    /// Raw code of a fine cell (callers must pass in-range indices).
    pub fn cell_code(&self, col: u64, row: u64) -> u8 {
        let t = self.tile as u64;
        let (tc, tr) = (col / t, row / t);
        let idx = tr as usize * self.spec.coarse_cols as usize + tc as usize;
        match &self.tiles[idx] {
            Some(tile) => {
                let (fc, fr) = (col % t, row % t);
                tile[(fr * t + fc) as usize]
            }
            None => 0,
        }
    }

    /// Count of fine cells per class code, including virtual zeros.
    pub fn census(&self) -> BTreeMap<u8, u64> {
        let mut counts: BTreeMap<u8, u64> = BTreeMap::new();
        let tile_cells = self.tile as u64 * self.tile as u64;
        let mut zero = 0u64;
        for t in &self.tiles {
            match t {
                Some(tile) => {
                    for &b in tile.iter() {
                        *counts.entry(b).or_insert(0) += 1;
                    }
                }
                None => zero += tile_cells,
            }
        }
        *counts.entry(0).or_insert(0) += zero;
        counts
    }

    /// Writes the binary raster format: magic `EXR1`, little-endian
    /// u32 width, u32 height, f64 origin_x, f64 origin_y, f64 cell_size,
    /// then `width * height` class bytes row-major from the origin row.
    pub fn write_binary(&self, path: &Path) -> Result<(), RasterError> {
        let mut w = BufWriter::new(File::create(path)?);
        let width = self.spec.fine_width();
        let height = self.spec.fine_height();
        w.write_all(b"EXR1")?;
        w.write_all(&(width as u32).to_le_bytes())?;
        w.write_all(&(height as u32).to_le_bytes())?;
        w.write_all(&self.spec.origin_x.to_le_bytes())?;
        w.write_all(&self.spec.origin_y.to_le_bytes())?;
        w.write_all(&self.spec.fine_cell.to_le_bytes())?;
        let t = self.tile as u64;
        let zeros = vec![0u8; self.tile as usize];
        for row in 0..height {
            let tr = (row / t) as usize;
            let fr = (row % t) as usize;
            for tc in 0..self.spec.coarse_cols as usize {
                match &self.tiles[tr * self.spec.coarse_cols as usize + tc] {
                    Some(tile) => {
                        let base = fr * self.tile as usize;
                        w.write_all(&tile[base..base + self.tile as usize])?;
                    }
                    None => w.write_all(&zeros)?,
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `EXR1` format back. `coarse_cell` is not stored in the
    /// file and must divide the stored extent evenly.
    pub fn read_binary(path: &Path, coarse_cell: f64) -> Result<Self, RasterError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"EXR1" {
            return Err(RasterError::Format("bad magic, expected EXR1".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let width = u32::from_le_bytes(b4) as u64;
        r.read_exact(&mut b4)?;
        let height = u32::from_le_bytes(b4) as u64;
        r.read_exact(&mut b8)?;
        let origin_x = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let origin_y = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let fine_cell = f64::from_le_bytes(b8);
        let per = coarse_cell / fine_cell;
        if per.fract() != 0.0 || per < 1.0 {
            return Err(RasterError::Format(format!(
                "coarse cell {coarse_cell} is not a multiple of stored cell size {fine_cell}"
            )));
        }
        let per = per as u64;
        if width % per != 0 || height % per != 0 {
            return Err(RasterError::Format(format!(
                "stored extent {width}x{height} does not tile by {per}"
            )));
        }
        let spec = GridSpec {
            origin_x,
            origin_y,
            fine_cell,
            coarse_cell,
            coarse_cols: (width / per) as u32,
            coarse_rows: (height / per) as u32,
        };
        spec.validate()?;
        let mut raster = LandUseRaster::empty(spec);
        let t = raster.tile as usize;
        let mut rowbuf = vec![0u8; width as usize];
        for row in 0..height {
            r.read_exact(&mut rowbuf)?;
            let tr = (row / per) as usize;
            let fr = (row % per) as usize;
            for tc in 0..spec.coarse_cols as usize {
                let chunk = &rowbuf[tc * t..(tc + 1) * t];
                if chunk.iter().any(|&b| b != 0) {
                    let tile = raster.tiles[tr * spec.coarse_cols as usize + tc]
                        .get_or_insert_with(|| vec![0u8; t * t].into_boxed_slice());
                    tile[fr * t..(fr + 1) * t].copy_from_slice(chunk);
                }
            }
        }
        Ok(raster)
    }

    /// Grayscale PGM dump for quick visual inspection. Codes are scaled
    /// by 4 so the default table spreads over 0..240.
    pub fn write_pgm(&self, path: &Path) -> Result<(), RasterError> {
        let mut w = BufWriter::new(File::create(path)?);
        let width = self.spec.fine_width();
        let height = self.spec.fine_height();
        write!(w, "P5\n{width} {height}\n255\n")?;
        let t = self.tile as u64;
        let zeros = vec![0u8; self.tile as usize];
        let mut scaled = vec![0u8; self.tile as usize];
        for row in 0..height {
            let tr = (row / t) as usize;
            let fr = (row % t) as usize;
            for tc in 0..self.spec.coarse_cols as usize {
                match &self.tiles[tr * self.spec.coarse_cols as usize + tc] {
                    Some(tile) => {
                        let base = fr * self.tile as usize;
                        for (d, &s) in scaled.iter_mut().zip(&tile[base..base + self.tile as usize])
                        {
                            *d = s.saturating_mul(4);
                        }
                        w.write_all(&scaled)?;
                    }
                    None => w.write_all(&zeros)?,
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Paints `layers` onto a fresh raster. Each 1 m cell receives the
/// class of the highest-priority layer whose polygon contains the cell
/// center; uncovered cells stay 0. Row bands are processed in parallel
/// with exclusive tile ownership per band, so the result is identical
/// for any thread count.
pub fn rasterize(
    layers: &[LayerSource],
    spec: &GridSpec,
    opts: &RasterizeOptions,
) -> Result<LandUseRaster, RasterError> {
    spec.validate()?;
    for (i, layer) in layers.iter().enumerate() {
        if !opts.classes.is_valid(layer.class.code()) {
            return Err(RasterError::InvalidClass(layer.class.code()));
        }
        for poly in &layer.polygons {
            for ring in &poly.rings {
                // Ring construction enforces closure; re-check emptiness
                // here so hand-built layers fail loudly.
                if ring.points().len() < 4 {
                    return Err(RasterError::InvalidGeometry {
                        layer: i,
                        source: GeomError::Degenerate(ring.points().len()),
                    });
                }
            }
        }
    }

    // Stable sort: priority ascending, later-listed wins within a tie
    // because it is painted later.
    let mut order: Vec<usize> = (0..layers.len()).collect();
    order.sort_by_key(|&i| layers[i].priority);

    let mut raster = LandUseRaster::empty(*spec);
    let tile = raster.tile as usize;
    let tile_bytes = tile * tile;
    let allocated = AtomicUsize::new(0);
    let cap = opts.memory_cap_bytes;

    let threads = opts.threads.max(1).min(spec.coarse_rows as usize);
    let tile_cols = spec.coarse_cols as usize;
    let rows_per_band = (spec.coarse_rows as usize).div_ceil(threads);

    let mut bands: Vec<(usize, &mut [Option<Box<[u8]>>])> = Vec::new();
    {
        let mut rest: &mut [Option<Box<[u8]>>] = &mut raster.tiles;
        let mut tile_row = 0usize;
        while !rest.is_empty() {
            let take = (rows_per_band * tile_cols).min(rest.len());
            let (band, tail) = rest.split_at_mut(take);
            bands.push((tile_row, band));
            tile_row += take / tile_cols;
            rest = tail;
        }
    }

    let results: Vec<Result<(), RasterError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = bands
            .into_iter()
            .map(|(tile_row0, band)| {
                let order = &order;
                let allocated = &allocated;
                scope.spawn(move || {
                    paint_band(
                        layers, order, spec, band, tile_row0, tile, tile_bytes, allocated, cap,
                    )
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("band worker panicked")).collect()
    });
    for r in results {
        r?;
    }
    Ok(raster)
}

/// Scanline-fills all layers into one horizontal band of tiles.
#[allow(clippy::too_many_arguments)]
fn paint_band(
    layers: &[LayerSource],
    order: &[usize],
    spec: &GridSpec,
    band: &mut [Option<Box<[u8]>>],
    tile_row0: usize,
    tile: usize,
    tile_bytes: usize,
    allocated: &AtomicUsize,
    cap: usize,
) -> Result<(), RasterError> {
    let tile_cols = spec.coarse_cols as usize;
    let band_rows = band.len() / tile_cols;
    let fine = spec.fine_cell;
    let row_lo = tile_row0 * tile; // fine rows [row_lo, row_hi)
    let row_hi = row_lo + band_rows * tile;
    let width = spec.fine_width() as i64;

    let mut xs: Vec<f64> = Vec::with_capacity(16);
    for &li in order {
        let layer = &layers[li];
        let code = layer.class.code();
        for poly in &layer.polygons {
            let (_, min_y, _, max_y) = poly.bounds();
            // Fine rows whose center (r + 0.5) * fine + origin_y falls in
            // [min_y, max_y).
            let r0 = (((min_y - spec.origin_y) / fine) - 0.5).ceil().max(row_lo as f64) as i64;
            let r1 = ((((max_y - spec.origin_y) / fine) - 0.5).ceil() as i64).min(row_hi as i64);
            for row in r0..r1 {
                let yc = spec.origin_y + (row as f64 + 0.5) * fine;
                xs.clear();
                for ring in &poly.rings {
                    for (a, b) in ring.edges() {
                        let spans = (a.y <= yc && yc < b.y) || (b.y <= yc && yc < a.y);
                        if spans {
                            xs.push(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
                        }
                    }
                }
                if xs.len() < 2 {
                    continue;
                }
                xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
                for pair in xs.chunks_exact(2) {
                    // Cells whose center (c + 0.5) * fine lies in [xa, xb).
                    let lo = (((pair[0] - spec.origin_x) / fine) - 0.5).ceil().max(0.0) as i64;
                    let hi = ((((pair[1] - spec.origin_x) / fine) - 0.5).ceil() as i64).min(width);
                    if lo >= hi {
                        continue;
                    }
                    fill_span(
                        band, tile_row0, tile_cols, tile, tile_bytes, allocated, cap, row as u64,
                        lo as u64, hi as u64, code,
                    )?;
                }
            }
        }
    }
    Ok(())
}

/// Writes `code` to fine row `row`, columns `[c0, c1)`, allocating tiles
/// as needed and charging them against the shared cap.
#[allow(clippy::too_many_arguments)]
fn fill_span(
    band: &mut [Option<Box<[u8]>>],
    tile_row0: usize,
    tile_cols: usize,
    tile: usize,
    tile_bytes: usize,
    allocated: &AtomicUsize,
    cap: usize,
    row: u64,
    c0: u64,
    c1: u64,
    code: u8,
) -> Result<(), RasterError> {
    let t = tile as u64;
    let tr = (row / t) as usize - tile_row0;
    let fr = (row % t) as usize;
    let mut c = c0;
    while c < c1 {
        let tc = (c / t) as usize;
        let end_in_tile = ((tc as u64 + 1) * t).min(c1);
        let slot = &mut band[tr * tile_cols + tc];
        if slot.is_none() {
            let used = allocated.fetch_add(tile_bytes, Ordering::Relaxed) + tile_bytes;
            if used > cap {
                return Err(RasterError::GridTooLarge {
                    required: used,
                    cap,
                });
            }
            *slot = Some(vec![0u8; tile_bytes].into_boxed_slice());
        }
        let tile_buf = slot.as_mut().expect("just allocated");
        let fc0 = (c % t) as usize;
        let fc1 = fc0 + (end_in_tile - c) as usize;
        tile_buf[fr * tile + fc0..fr * tile + fc1].fill(code);
        c = end_in_tile;
    }
    Ok(())
}
