use std::io::{self, BufRead, Read, Write};
use std::sync::Arc;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::TerrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub height: f64,
    pub valid: bool,
    pub confidence: f64,
}

impl Cell {
    pub const UNKNOWN: Cell = Cell { height: 0.0, valid: false, confidence: 0.0 };
}

/// Fixed world-frame height grid. Cells are stored row-major (`iy * width + ix`)
/// and cell `(ix, iy)` covers `[origin + i·res, origin + (i+1)·res)` on each axis.
///
/// Cloning is cheap: the cell buffer is shared and copied on the next write,
/// so a clone acts as an immutable snapshot for readers on other threads.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap2p5 {
    origin: Vector2<f64>,
    resolution: f64,
    width: usize,
    height: usize,
    cells: Arc<Vec<Cell>>,
}

const BINARY_MAGIC: &[u8; 4] = b"GM25";
const BINARY_VERSION: u16 = 1;

impl GridMap2p5 {
    pub fn new(
        origin: Vector2<f64>,
        resolution: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, TerrainError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(TerrainError::InvalidGeometry(format!("resolution {resolution} must be > 0")));
        }
        if width == 0 || height == 0 {
            return Err(TerrainError::InvalidGeometry(format!("dimensions {width}x{height} must be >= 1")));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(TerrainError::InvalidGeometry("non-finite origin".into()));
        }
        Ok(GridMap2p5 {
            origin,
            resolution,
            width,
            height,
            cells: Arc::new(vec![Cell::UNKNOWN; width * height]),
        })
    }

    /// Smallest grid at `resolution` whose extent covers `[min, max]`.
    pub fn covering(min: Vector2<f64>, max: Vector2<f64>, resolution: f64) -> Result<Self, TerrainError> {
        if !(max.x > min.x && max.y > min.y) {
            return Err(TerrainError::InvalidGeometry("empty extent".into()));
        }
        let w = ((max.x - min.x) / resolution).ceil().max(1.0) as usize;
        let h = ((max.y - min.y) / resolution).ceil().max(1.0) as usize;
        GridMap2p5::new(min, resolution, w, h)
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn snapshot(&self) -> GridMap2p5 {
        self.clone()
    }

    pub fn cell_index(&self, pos: &Vector2<f64>) -> Option<(usize, usize)> {
        let fx = ((pos.x - self.origin.x) / self.resolution).floor();
        let fy = ((pos.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || !fx.is_finite() || !fy.is_finite() {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.width && iy < self.height).then_some((ix, iy))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vector2<f64> {
        Vector2::new(
            self.origin.x + (ix as f64 + 0.5) * self.resolution,
            self.origin.y + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cell(&self, ix: usize, iy: usize) -> &Cell {
        &self.cells[iy * self.width + ix]
    }

    pub(crate) fn cell_mut(&mut self, ix: usize, iy: usize) -> &mut Cell {
        let w = self.width;
        &mut Arc::make_mut(&mut self.cells)[iy * w + ix]
    }

    pub fn set_cell(&mut self, ix: usize, iy: usize, cell: Cell) {
        *self.cell_mut(ix, iy) = cell;
    }

    /// Height of the cell containing `pos`; `None` when the cell is invalid or
    /// `pos` lies outside the grid.
    pub fn query_height(&self, pos: &Vector2<f64>) -> Option<f64> {
        let (ix, iy) = self.cell_index(pos)?;
        let c = self.cell(ix, iy);
        c.valid.then_some(c.height)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn valid_count(&self) -> usize {
        self.cells.iter().filter(|c| c.valid).count()
    }

    /// Inclusive index range of cells whose centres may lie in `[lo, hi]`.
    pub(crate) fn index_range(&self, lo: &Vector2<f64>, hi: &Vector2<f64>) -> Option<((usize, usize), (usize, usize))> {
        let r = self.resolution;
        let to_idx = |v: f64, o: f64| (v - o) / r - 0.5;
        let x0 = to_idx(lo.x, self.origin.x).ceil().max(0.0);
        let y0 = to_idx(lo.y, self.origin.y).ceil().max(0.0);
        let x1 = to_idx(hi.x, self.origin.x).floor().min(self.width as f64 - 1.0);
        let y1 = to_idx(hi.y, self.origin.y).floor().min(self.height as f64 - 1.0);
        if !(x0 <= x1 && y0 <= y1) {
            return None;
        }
        Some(((x0 as usize, y0 as usize), (x1 as usize, y1 as usize)))
    }

    /// Text dump, one cell per line: `x,y,height,valid,confidence` at the cell
    /// centre. Invalid cells print `nan` for the height.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,y,height,valid,confidence")?;
        for iy in 0..self.height {
            for ix in 0..self.width {
                let c = self.cell(ix, iy);
                let p = self.cell_center(ix, iy);
                if c.valid {
                    writeln!(out, "{},{},{},1,{}", p.x, p.y, c.height, c.confidence)?;
                } else {
                    writeln!(out, "{},{},nan,0,{}", p.x, p.y, c.confidence)?;
                }
            }
        }
        Ok(())
    }

    /// Reads heights and validity back from a CSV dump. The grid geometry must
    /// be supplied (the text form does not carry it explicitly).
    pub fn read_csv_into<R: BufRead>(&mut self, input: R) -> Result<(), TerrainError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| TerrainError::Format("empty csv".into()))?
            .map_err(|e| TerrainError::Format(e.to_string()))?;
        if header.trim() != "x,y,height,valid,confidence" {
            return Err(TerrainError::Format(format!("unexpected header `{header}`")));
        }
        let mut n = 0usize;
        for line in lines {
            let line = line.map_err(|e| TerrainError::Format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(TerrainError::Format(format!("bad record `{line}`")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| TerrainError::Format(format!("{s}: {e}")));
            let pos = Vector2::new(num(f[0])?, num(f[1])?);
            let (ix, iy) = self
                .cell_index(&pos)
                .ok_or_else(|| TerrainError::Format(format!("record outside grid `{line}`")))?;
            let valid = f[3] == "1";
            let height = if valid { num(f[2])? } else { 0.0 };
            self.set_cell(ix, iy, Cell { height, valid, confidence: num(f[4])? });
            n += 1;
        }
        if n != self.width * self.height {
            return Err(TerrainError::Format(format!("expected {} records, got {n}", self.width * self.height)));
        }
        Ok(())
    }

    /// Compact little-endian form: magic `GM25`, `u16` version, origin x/y and
    /// resolution as `f64`, width/height as `u32`, then row-major records of
    /// `height: f64, valid: u8, confidence: f64`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&BINARY_VERSION.to_le_bytes())?;
        out.write_all(&self.origin.x.to_le_bytes())?;
        out.write_all(&self.origin.y.to_le_bytes())?;
        out.write_all(&self.resolution.to_le_bytes())?;
        out.write_all(&(self.width as u32).to_le_bytes())?;
        out.write_all(&(self.height as u32).to_le_bytes())?;
        for c in self.cells.iter() {
            out.write_all(&c.height.to_le_bytes())?;
            out.write_all(&[c.valid as u8])?;
            out.write_all(&c.confidence.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self, TerrainError> {
        let fmt = |e: io::Error| TerrainError::Format(e.to_string());
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(fmt)?;
        if &magic != BINARY_MAGIC {
            return Err(TerrainError::Format("bad magic".into()));
        }
        let mut b2 = [0u8; 2];
        input.read_exact(&mut b2).map_err(fmt)?;
        let version = u16::from_le_bytes(b2);
        if version != BINARY_VERSION {
            return Err(TerrainError::Format(format!("unsupported version {version}")));
        }
        let read_f64 = |input: &mut R| -> Result<f64, TerrainError> {
            let mut b = [0u8; 8];
            input.read_exact(&mut b).map_err(fmt)?;
            Ok(f64::from_le_bytes(b))
        };
        let ox = read_f64(&mut input)?;
        let oy = read_f64(&mut input)?;
        let res = read_f64(&mut input)?;
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4).map_err(fmt)?;
        let w = u32::from_le_bytes(b4) as usize;
        input.read_exact(&mut b4).map_err(fmt)?;
        let h = u32::from_le_bytes(b4) as usize;
        let mut map = GridMap2p5::new(Vector2::new(ox, oy), res, w, h)?;
        let cells = Arc::make_mut(&mut map.cells);
        for c in cells.iter_mut() {
            let height = read_f64(&mut input)?;
            let mut v = [0u8; 1];
            input.read_exact(&mut v).map_err(fmt)?;
            let confidence = read_f64(&mut input)?;
            *c = Cell { height, valid: v[0] != 0, confidence };
        }
        Ok(map)
    }
}
