//! Grid geometry and land-use class codes.

use serde::{Deserialize, Serialize};

/// Integer land-use class stored per 1 m cell.
///
/// Default code table: 0 background/water/out-of-area, 10 residential,
/// 20 non-residential, 50 outdoor open space, 60 vehicular road.
/// Classes 10/20/50 participate in activity counting; 60 is excluded
/// from every count and 0 yields no count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LandUseClass(pub u8);

impl LandUseClass {
    pub const BACKGROUND: LandUseClass = LandUseClass(0);
    pub const RESIDENTIAL: LandUseClass = LandUseClass(10);
    pub const NON_RESIDENTIAL: LandUseClass = LandUseClass(20);
    pub const OUTDOOR: LandUseClass = LandUseClass(50);
    pub const VEHICULAR_ROAD: LandUseClass = LandUseClass(60);

    pub fn code(self) -> u8 {
        self.0
    }
}

impl std::fmt::Display for LandUseClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The class-code table in effect for a run. The default matches the
/// published residential/outdoor codes and fills in the rest; deployments
/// with a different upstream mapping can override all four codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    pub residential: u8,
    pub non_residential: u8,
    pub outdoor: u8,
    pub road: u8,
}

impl Default for ClassTable {
    fn default() -> Self {
        ClassTable {
            residential: 10,
            non_residential: 20,
            outdoor: 50,
            road: 60,
        }
    }
}

impl ClassTable {
    /// Classes that participate in activity counting, in canonical
    /// (residential, non-residential, outdoor) order.
    pub fn counted(&self) -> [u8; 3] {
        [self.residential, self.non_residential, self.outdoor]
    }

    /// True for codes a raster layer is allowed to carry.
    pub fn is_valid(&self, code: u8) -> bool {
        code == 0
            || code == self.residential
            || code == self.non_residential
            || code == self.outdoor
            || code == self.road
    }

    /// True when activity on this code contributes to the cube.
    pub fn is_counted(&self, code: u8) -> bool {
        code == self.residential || code == self.non_residential || code == self.outdoor
    }
}

/// Geometry of the fine (1 m) and coarse (250 m) grids.
///
/// Both grids share an origin and are indexed half-open: a point on a
/// shared cell edge belongs to the cell with the larger index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub fine_cell: f64,
    pub coarse_cell: f64,
    pub coarse_cols: u32,
    pub coarse_rows: u32,
}

impl Default for GridSpec {
    /// The study-area default: 187 x 186 cells of 250 m on a 1 m raster.
    fn default() -> Self {
        GridSpec {
            origin_x: 0.0,
            origin_y: 0.0,
            fine_cell: 1.0,
            coarse_cell: 250.0,
            coarse_cols: 187,
            coarse_rows: 186,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.fine_cell > 0.0 && self.coarse_cell > 0.0) {
            return Err(GridError::BadCellSize);
        }
        let ratio = self.coarse_cell / self.fine_cell;
        if ratio.fract() != 0.0 || ratio < 1.0 {
            return Err(GridError::NotAMultiple {
                coarse: self.coarse_cell,
                fine: self.fine_cell,
            });
        }
        if self.coarse_cols < 1 || self.coarse_rows < 1 {
            return Err(GridError::EmptyGrid);
        }
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(GridError::BadOrigin);
        }
        Ok(())
    }

    /// Fine cells per coarse cell along one axis.
    pub fn fine_per_coarse(&self) -> u32 {
        (self.coarse_cell / self.fine_cell) as u32
    }

    /// Fine raster width in cells.
    pub fn fine_width(&self) -> u64 {
        self.coarse_cols as u64 * self.fine_per_coarse() as u64
    }

    /// Fine raster height in cells.
    pub fn fine_height(&self) -> u64 {
        self.coarse_rows as u64 * self.fine_per_coarse() as u64
    }

    /// Coarse cell containing (x, y), or None outside the grid.
    /// Cells are half-open `[low, high)` on both axes.
    pub fn coarse_index(&self, x: f64, y: f64) -> Option<(u32, u32)> {
        let col = ((x - self.origin_x) / self.coarse_cell).floor();
        let row = ((y - self.origin_y) / self.coarse_cell).floor();
        if col < 0.0 || row < 0.0 || col >= self.coarse_cols as f64 || row >= self.coarse_rows as f64
        {
            return None;
        }
        Some((col as u32, row as u32))
    }

    /// Fine cell containing (x, y), or None outside the raster extent.
    pub fn fine_index(&self, x: f64, y: f64) -> Option<(u64, u64)> {
        let col = ((x - self.origin_x) / self.fine_cell).floor();
        let row = ((y - self.origin_y) / self.fine_cell).floor();
        if col < 0.0 || row < 0.0 || col >= self.fine_width() as f64 || row >= self.fine_height() as f64
        {
            return None;
        }
        Some((col as u64, row as u64))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("cell sizes must be positive")]
    BadCellSize,
    #[error("coarse cell {coarse} is not an integer multiple of fine cell {fine}")]
    NotAMultiple { coarse: f64, fine: f64 },
    #[error("grid must have at least one coarse cell on each axis")]
    EmptyGrid,
    #[error("grid origin must be finite")]
    BadOrigin,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::default()
    }

    #[test]
    fn default_spec_is_valid_and_sized() {
        let s = spec();
        s.validate().unwrap();
        assert_eq!(s.fine_width(), 187 * 250);
        assert_eq!(s.fine_height(), 186 * 250);
    }

    #[test]
    fn origin_maps_to_cell_zero() {
        assert_eq!(spec().coarse_index(0.0, 0.0), Some((0, 0)));
    }

    #[test]
    fn shared_edge_belongs_to_larger_index() {
        assert_eq!(spec().coarse_index(250.0, 0.0), Some((1, 0)));
        assert_eq!(spec().coarse_index(249.999, 0.0), Some((0, 0)));
    }

    #[test]
    fn outside_is_none() {
        let s = spec();
        assert_eq!(s.coarse_index(-0.001, 0.0), None);
        assert_eq!(s.coarse_index(187.0 * 250.0, 10.0), None);
        assert_eq!(s.coarse_index(10.0, 186.0 * 250.0), None);
    }

    #[test]
    fn non_multiple_rejected() {
        let mut s = spec();
        s.coarse_cell = 250.5;
        assert!(matches!(s.validate(), Err(GridError::NotAMultiple { .. })));
    }

    #[test]
    fn class_table_roles() {
        let t = ClassTable::default();
        assert_eq!(t.counted(), [10, 20, 50]);
        assert!(t.is_valid(0) && t.is_valid(60));
        assert!(!t.is_valid(7));
        assert!(t.is_counted(50));
        assert!(!t.is_counted(60));
        assert!(!t.is_counted(0));
    }
}
