//! The activity cube: exact unique-device counts per (250 m cell, hour,
//! land-use class), plus zone aggregation.
//!
//! Counting is exact, not sketched. Each partition of the ping stream
//! emits (key, device) tuples, sorted and deduplicated; tuple runs that
//! exceed the memory budget spill to temporary files. A final k-way
//! merge deduplicates across runs and counts devices per key, so the
//! result is identical for any partitioning of the input and any
//! worker count.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};

use crate::geom::Polygon;
use crate::grid::{ClassTable, GridSpec};
use crate::ingest::Ping;
use crate::raster::LandUseRaster;

#[derive(Debug, thiserror::Error)]
pub enum CubeError {
    #[error("raster does not match the grid spec: {0}")]
    SpecMismatch(String),
    #[error("zone {0} has no cells (N_z = 0)")]
    EmptyZone(String),
    #[error("cell ({col},{row}) is assigned to more than one zone")]
    DuplicateCell { col: u32, row: u32 },
    #[error("cell ({col},{row}) is outside the grid")]
    CellOutOfGrid { col: u32, row: u32 },
    #[error("{file}: line {line}: {message}")]
    BadRow {
        file: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Key of one cube entry. Field order gives the sort/export order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CubeKey {
    pub col: u32,
    pub row: u32,
    pub hour: i64,
    pub class: u8,
}

/// Unique-device counts per (coarse cell, hour, class). Absent keys
/// mean zero; stored counts are always >= 1 and no key carries the
/// background or road class.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityCube {
    spec: GridSpec,
    entries: BTreeMap<CubeKey, u64>,
}

impl ActivityCube {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn entries(&self) -> &BTreeMap<CubeKey, u64> {
        &self.entries
    }

    pub fn count(&self, key: &CubeKey) -> u64 {
        self.entries.get(key).copied().unwrap_or(0)
    }

    /// Min and max hour over all entries, None for an empty cube.
    pub fn hour_range(&self) -> Option<(i64, i64)> {
        let mut range: Option<(i64, i64)> = None;
        for key in self.entries.keys() {
            range = Some(match range {
                Some((lo, hi)) => (lo.min(key.hour), hi.max(key.hour)),
                None => (key.hour, key.hour),
            });
        }
        range
    }

    /// Writes `col,row,hour,class,count` rows in key order.
    pub fn to_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "col,row,hour,class,count")?;
        for (k, v) in &self.entries {
            writeln!(w, "{},{},{},{},{}", k.col, k.row, k.hour, k.class, v)?;
        }
        Ok(())
    }

    pub fn from_csv<R: Read>(r: R, spec: &GridSpec, name: &str) -> Result<Self, CubeError> {
        let mut entries = BTreeMap::new();
        let mut lines = BufReader::new(r).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "col,row,hour,class,count" => {}
            _ => {
                return Err(CubeError::BadRow {
                    file: name.into(),
                    line: 1,
                    message: "expected header col,row,hour,class,count".into(),
                })
            }
        }
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| CubeError::BadRow {
                file: name.into(),
                line: i + 2,
                message,
            };
            let parts: Vec<&str> = line.trim().split(',').collect();
            if parts.len() != 5 {
                return Err(bad(format!("expected 5 fields, got {}", parts.len())));
            }
            let key = CubeKey {
                col: parts[0].parse().map_err(|_| bad("bad col".into()))?,
                row: parts[1].parse().map_err(|_| bad("bad row".into()))?,
                hour: parts[2].parse().map_err(|_| bad("bad hour".into()))?,
                class: parts[3].parse().map_err(|_| bad("bad class".into()))?,
            };
            let count: u64 = parts[4].parse().map_err(|_| bad("bad count".into()))?;
            if count == 0 {
                return Err(bad("zero count stored".into()));
            }
            entries.insert(key, count);
        }
        Ok(ActivityCube {
            spec: *spec,
            entries,
        })
    }
}

/// Cube construction knobs. `partitions` is both the data split and the
/// worker count; `spill_bytes` bounds resident tuple memory across all
/// partitions before runs spill to disk.
#[derive(Debug, Clone, Copy)]
pub struct CubeOptions {
    pub partitions: usize,
    pub spill_bytes: usize,
    pub classes: ClassTable,
}

impl Default for CubeOptions {
    fn default() -> Self {
        CubeOptions {
            partitions: 1,
            spill_bytes: 512 << 20,
            classes: ClassTable::default(),
        }
    }
}

type Tuple = (CubeKey, u64);
const TUPLE_BYTES: usize = 25; // serialized: col u32, row u32, hour i64, class u8, device u64

enum Run {
    Mem(std::vec::IntoIter<Tuple>),
    File(BufReader<File>),
}

impl Run {
    fn next(&mut self) -> Result<Option<Tuple>, CubeError> {
        match self {
            Run::Mem(it) => Ok(it.next()),
            Run::File(r) => {
                let mut buf = [0u8; TUPLE_BYTES];
                let mut total = 0;
                while total < TUPLE_BYTES {
                    let n = r.read(&mut buf[total..])?;
                    if n == 0 {
                        break;
                    }
                    total += n;
                }
                match total {
                    0 => Ok(None),
                    TUPLE_BYTES => Ok(Some((
                        CubeKey {
                            col: u32::from_le_bytes(buf[0..4].try_into().unwrap()),
                            row: u32::from_le_bytes(buf[4..8].try_into().unwrap()),
                            hour: i64::from_le_bytes(buf[8..16].try_into().unwrap()),
                            class: buf[16],
                        },
                        u64::from_le_bytes(buf[17..25].try_into().unwrap()),
                    ))),
                    _ => Err(CubeError::Io(io::Error::new(
                        io::ErrorKind::UnexpectedEof,
                        "truncated spill run",
                    ))),
                }
            }
        }
    }
}

fn spill_run(tuples: &mut Vec<Tuple>) -> Result<Run, CubeError> {
    tuples.sort_unstable();
    tuples.dedup();
    let mut file = tempfile::tempfile()?;
    {
        let mut w = BufWriter::new(&mut file);
        for (key, device) in tuples.iter() {
            w.write_all(&key.col.to_le_bytes())?;
            w.write_all(&key.row.to_le_bytes())?;
            w.write_all(&key.hour.to_le_bytes())?;
            w.write_all(&[key.class])?;
            w.write_all(&device.to_le_bytes())?;
        }
        w.flush()?;
    }
    tuples.clear();
    file.seek(SeekFrom::Start(0))?;
    Ok(Run::File(BufReader::new(file)))
}

/// Builds the cube from projected, filtered pings.
///
/// A device contributes at most one to each distinct (cell, hour,
/// class) key it touches; pings classified as background or road
/// contribute nothing. The result is independent of ping order and of
/// `opts.partitions`.
pub fn build_cube(
    pings: &[Ping],
    raster: &LandUseRaster,
    spec: &GridSpec,
    opts: &CubeOptions,
) -> Result<ActivityCube, CubeError> {
    if raster.spec() != spec {
        return Err(CubeError::SpecMismatch(format!(
            "raster grid {:?} != requested {:?}",
            raster.spec(),
            spec
        )));
    }
    let partitions = opts.partitions.max(1);
    let chunk_len = pings.len().div_ceil(partitions).max(1);
    let budget_tuples = (opts.spill_bytes / TUPLE_BYTES / partitions).max(1024);

    let per_partition: Vec<Result<Vec<Run>, CubeError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = pings
            .chunks(chunk_len)
            .map(|chunk| {
                scope.spawn(move || -> Result<Vec<Run>, CubeError> {
                    let mut runs = Vec::new();
                    let mut tuples: Vec<Tuple> = Vec::new();
                    for ping in chunk {
                        let code = raster.classify_point(ping.x as f64, ping.y as f64).code();
                        if !opts.classes.is_counted(code) {
                            continue;
                        }
                        let Some((col, row)) = spec.coarse_index(ping.x as f64, ping.y as f64)
                        else {
                            continue;
                        };
                        tuples.push((
                            CubeKey {
                                col,
                                row,
                                hour: ping.local_hour,
                                class: code,
                            },
                            ping.device,
                        ));
                        if tuples.len() >= budget_tuples {
                            runs.push(spill_run(&mut tuples)?);
                        }
                    }
                    tuples.sort_unstable();
                    tuples.dedup();
                    runs.push(Run::Mem(tuples.into_iter()));
                    Ok(runs)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("cube worker panicked"))
            .collect()
    });

    let mut runs = Vec::new();
    for r in per_partition {
        runs.extend(r?);
    }
    merge_runs(runs, *spec)
}

/// K-way merge of sorted (key, device) runs into per-key distinct counts.
fn merge_runs(mut runs: Vec<Run>, spec: GridSpec) -> Result<ActivityCube, CubeError> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let mut heap: BinaryHeap<Reverse<(Tuple, usize)>> = BinaryHeap::new();
    for (i, run) in runs.iter_mut().enumerate() {
        if let Some(t) = run.next()? {
            heap.push(Reverse((t, i)));
        }
    }
    let mut entries: BTreeMap<CubeKey, u64> = BTreeMap::new();
    let mut last: Option<Tuple> = None;
    while let Some(Reverse((tuple, i))) = heap.pop() {
        if last != Some(tuple) {
            *entries.entry(tuple.0).or_insert(0) += 1;
            last = Some(tuple);
        }
        if let Some(t) = runs[i].next()? {
            heap.push(Reverse((t, i)));
        }
    }
    Ok(ActivityCube { spec, entries })
}

/// Assignment of coarse cells to named zones.
#[derive(Debug, Clone)]
pub struct ZoneMap {
    /// Zone names, sorted; index into this is the zone id used below.
    zones: Vec<String>,
    sizes: Vec<u64>,
    assignment: BTreeMap<(u32, u32), u32>,
}

impl ZoneMap {
    /// Builds from (cell, zone name) pairs. Every cell may appear once.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, CubeError>
    where
        I: IntoIterator<Item = ((u32, u32), String)>,
    {
        let pairs: Vec<((u32, u32), String)> = pairs.into_iter().collect();
        let mut zones: Vec<String> = pairs.iter().map(|(_, z)| z.clone()).collect();
        zones.sort();
        zones.dedup();
        let index = |name: &str| zones.binary_search_by(|z| z.as_str().cmp(name)).unwrap() as u32;
        let mut assignment = BTreeMap::new();
        let mut sizes = vec![0u64; zones.len()];
        for ((col, row), zone) in pairs {
            let zidx = index(&zone);
            if assignment.insert((col, row), zidx).is_some() {
                return Err(CubeError::DuplicateCell { col, row });
            }
            sizes[zidx as usize] += 1;
        }
        Ok(ZoneMap {
            zones,
            sizes,
            assignment,
        })
    }

    /// Reads `col,row,zone_id` CSV.
    pub fn from_csv<R: Read>(r: R, name: &str) -> Result<Self, CubeError> {
        let mut pairs = Vec::new();
        let mut lines = BufReader::new(r).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "col,row,zone_id" => {}
            _ => {
                return Err(CubeError::BadRow {
                    file: name.into(),
                    line: 1,
                    message: "expected header col,row,zone_id".into(),
                })
            }
        }
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| CubeError::BadRow {
                file: name.into(),
                line: i + 2,
                message,
            };
            let parts: Vec<&str> = line.trim().split(',').collect();
            if parts.len() != 3 {
                return Err(bad(format!("expected 3 fields, got {}", parts.len())));
            }
            let col: u32 = parts[0].parse().map_err(|_| bad("bad col".into()))?;
            let row: u32 = parts[1].parse().map_err(|_| bad("bad row".into()))?;
            pairs.push(((col, row), parts[2].to_string()));
        }
        ZoneMap::from_pairs(pairs)
    }

    /// Writes `col,row,zone_id` CSV in cell order.
    pub fn to_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "col,row,zone_id")?;
        for ((col, row), zidx) in &self.assignment {
            writeln!(w, "{},{},{}", col, row, self.zones[*zidx as usize])?;
        }
        Ok(())
    }

    /// Assigns every coarse cell whose center falls inside a zone
    /// polygon; the first listed zone wins where polygons overlap.
    /// Zones that capture no cell are an error.
    pub fn from_polygons(
        zones: &[(String, Vec<Polygon>)],
        spec: &GridSpec,
    ) -> Result<Self, CubeError> {
        let mut pairs = Vec::new();
        for row in 0..spec.coarse_rows {
            for col in 0..spec.coarse_cols {
                let cx = spec.origin_x + (col as f64 + 0.5) * spec.coarse_cell;
                let cy = spec.origin_y + (row as f64 + 0.5) * spec.coarse_cell;
                for (name, polygons) in zones {
                    if crate::geom::multi_contains(polygons, cx, cy) {
                        pairs.push(((col, row), name.clone()));
                        break;
                    }
                }
            }
        }
        let map = ZoneMap::from_pairs(pairs)?;
        for (name, _) in zones {
            if !map.zones.iter().any(|z| z == name) {
                return Err(CubeError::EmptyZone(name.clone()));
            }
        }
        Ok(map)
    }

    pub fn validate_against(&self, spec: &GridSpec) -> Result<(), CubeError> {
        for &(col, row) in self.assignment.keys() {
            if col >= spec.coarse_cols || row >= spec.coarse_rows {
                return Err(CubeError::CellOutOfGrid { col, row });
            }
        }
        Ok(())
    }

    pub fn zones(&self) -> &[String] {
        &self.zones
    }

    pub fn size(&self, zone_idx: u32) -> u64 {
        self.sizes[zone_idx as usize]
    }

    pub fn zone_of(&self, col: u32, row: u32) -> Option<u32> {
        self.assignment.get(&(col, row)).copied()
    }
}

/// Mean devices per cell, per (zone, hour, class). Values are dense in
/// concept (absent key = 0); the map stores non-zeros only.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneActivity {
    zones: Vec<String>,
    values: BTreeMap<(u32, i64, u8), f64>,
    hour_range: Option<(i64, i64)>,
    classes: ClassTable,
}

impl ZoneActivity {
    pub fn zones(&self) -> &[String] {
        &self.zones
    }

    pub fn classes(&self) -> &ClassTable {
        &self.classes
    }

    /// Inclusive hour range covered by the underlying data, including
    /// hours whose values are all zero.
    pub fn hour_range(&self) -> Option<(i64, i64)> {
        self.hour_range
    }

    pub fn zone_index(&self, zone: &str) -> Option<u32> {
        self.zones
            .binary_search_by(|z| z.as_str().cmp(zone))
            .ok()
            .map(|i| i as u32)
    }

    pub fn value(&self, zone: &str, hour: i64, class: u8) -> f64 {
        match self.zone_index(zone) {
            Some(z) => self.values.get(&(z, hour, class)).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    fn value_idx(&self, zone_idx: u32, hour: i64, class: u8) -> f64 {
        self.values
            .get(&(zone_idx, hour, class))
            .copied()
            .unwrap_or(0.0)
    }

    /// Writes the dense `zone,hour,class,value` grid so a reader
    /// recovers both the values and the exact hour range.
    pub fn to_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "zone,hour,class,value")?;
        let Some((lo, hi)) = self.hour_range else {
            return Ok(());
        };
        for (zidx, zone) in self.zones.iter().enumerate() {
            for hour in lo..=hi {
                for class in self.classes.counted() {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        zone,
                        hour,
                        class,
                        self.value_idx(zidx as u32, hour, class)
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn from_csv<R: Read>(r: R, classes: ClassTable, name: &str) -> Result<Self, CubeError> {
        let mut rows: Vec<(String, i64, u8, f64)> = Vec::new();
        let mut lines = BufReader::new(r).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "zone,hour,class,value" => {}
            _ => {
                return Err(CubeError::BadRow {
                    file: name.into(),
                    line: 1,
                    message: "expected header zone,hour,class,value".into(),
                })
            }
        }
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| CubeError::BadRow {
                file: name.into(),
                line: i + 2,
                message,
            };
            let parts: Vec<&str> = line.trim().split(',').collect();
            if parts.len() != 4 {
                return Err(bad(format!("expected 4 fields, got {}", parts.len())));
            }
            rows.push((
                parts[0].to_string(),
                parts[1].parse().map_err(|_| bad("bad hour".into()))?,
                parts[2].parse().map_err(|_| bad("bad class".into()))?,
                parts[3].parse().map_err(|_| bad("bad value".into()))?,
            ));
        }
        let mut zones: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
        zones.sort();
        zones.dedup();
        let mut values = BTreeMap::new();
        let mut hour_range: Option<(i64, i64)> = None;
        for (zone, hour, class, value) in rows {
            hour_range = Some(match hour_range {
                Some((lo, hi)) => (lo.min(hour), hi.max(hour)),
                None => (hour, hour),
            });
            if value != 0.0 {
                let zidx = zones.binary_search(&zone).unwrap() as u32;
                values.insert((zidx, hour, class), value);
            }
        }
        Ok(ZoneActivity {
            zones,
            values,
            hour_range,
            classes,
        })
    }
}

/// Zone aggregation: value(z,t,L) = (1/N_z) * sum over cells of z of
/// count(cell,t,L). Cells with zero count contribute nothing to the sum
/// but stay in the divisor N_z. Cells outside every zone are skipped.
pub fn zone_average(
    cube: &ActivityCube,
    zones: &ZoneMap,
    classes: ClassTable,
) -> Result<ZoneActivity, CubeError> {
    for (i, zone) in zones.zones().iter().enumerate() {
        if zones.sizes[i] == 0 {
            return Err(CubeError::EmptyZone(zone.clone()));
        }
    }
    let mut values: BTreeMap<(u32, i64, u8), f64> = BTreeMap::new();
    for (key, count) in cube.entries() {
        if let Some(zidx) = zones.zone_of(key.col, key.row) {
            *values.entry((zidx, key.hour, key.class)).or_insert(0.0) += *count as f64;
        }
    }
    for ((zidx, _, _), v) in values.iter_mut() {
        *v /= zones.size(*zidx) as f64;
    }
    Ok(ZoneActivity {
        zones: zones.zones().to_vec(),
        values,
        hour_range: cube.hour_range(),
        classes,
    })
}

/// Exposure density for one zone-hour: activity density pooled over the
/// non-residential and outdoor classes.
pub fn exposure_density(za: &ZoneActivity, zone: &str, hour: i64) -> f64 {
    za.value(zone, hour, za.classes.non_residential) + za.value(zone, hour, za.classes.outdoor)
}

/// Class shares of one zone-hour in (residential, non-residential,
/// outdoor) order; None when the three-class total is zero.
pub fn proportions(za: &ZoneActivity, zone: &str, hour: i64) -> Option<(f64, f64, f64)> {
    let r = za.value(zone, hour, za.classes.residential);
    let n = za.value(zone, hour, za.classes.non_residential);
    let o = za.value(zone, hour, za.classes.outdoor);
    let total = r + n + o;
    if total == 0.0 {
        None
    } else {
        Some((r / total, n / total, o / total))
    }
}
