//! Ping ingestion: CSV parsing, projection, timestamp adjustment, and
//! the device and spatial filters.
//!
//! Timestamps are adjusted to a fixed UTC-5 offset. The study window
//! crosses the March DST change, but the source data is labeled Eastern
//! Standard Time and a fixed offset keeps every derived hour and date
//! deterministic, so no DST discontinuity exists anywhere downstream.
//! Device identifiers are hashed on ingest and the raw strings are
//! never persisted.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;

/// Seconds of offset for the fixed EST clock (UTC-5, no DST).
pub const EST_OFFSET_SECS: i64 = 5 * 3600;

/// Spherical earth radius used by the equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A parsed input row before projection and filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPing {
    pub device_id: String,
    /// UTC epoch seconds.
    pub timestamp: i64,
    pub lon: f64,
    pub lat: f64,
}

/// A projected, clock-adjusted ping. This is the 24-byte record stored
/// in binary shards: u64 device, i64 local_hour, f32 x, f32 y,
/// little-endian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ping {
    pub device: u64,
    /// Hours since the epoch on the fixed UTC-5 clock.
    pub local_hour: i64,
    pub x: f32,
    pub y: f32,
}

impl Ping {
    /// Local calendar day index (days since 1970-01-01, UTC-5 clock).
    pub fn local_day(&self) -> i64 {
        self.local_hour.div_euclid(24)
    }
}

/// Study bounding box in degrees, half-open on both axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl Default for BoundingBox {
    /// The Greater New York study extent.
    fn default() -> Self {
        BoundingBox {
            min_lat: 40.49611,
            min_lon: -74.25558,
            max_lat: 40.91553,
            max_lon: -73.70000,
        }
    }
}

impl BoundingBox {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.min_lat < self.max_lat && self.min_lon < self.max_lon {
            Ok(())
        } else {
            Err(IngestError::BadBoundingBox)
        }
    }

    /// Half-open containment: min <= v < max on both axes.
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.min_lat && lat < self.max_lat && lon >= self.min_lon && lon < self.max_lon
    }

    pub fn center_lat(&self) -> f64 {
        0.5 * (self.min_lat + self.max_lat)
    }

    /// Parses `minlat,minlon,maxlat,maxlon` decimal degrees.
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let parts: Vec<&str> = text.split(',').collect();
        if parts.len() != 4 {
            return Err(IngestError::BadBoundingBox);
        }
        let mut v = [0.0f64; 4];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part.trim().parse().map_err(|_| IngestError::BadBoundingBox)?;
        }
        let bbox = BoundingBox {
            min_lat: v[0],
            min_lon: v[1],
            max_lat: v[2],
            max_lon: v[3],
        };
        bbox.validate()?;
        Ok(bbox)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("missing or malformed header; expected `device_id,timestamp,latitude,longitude`")]
    MissingHeader,
    #[error("io failure: {0}")]
    Io(#[from] io::Error),
    #[error("bounding box must satisfy min < max on both axes")]
    BadBoundingBox,
    #[error("ping shard file is truncated or malformed: {0}")]
    BadShard(PathBuf),
}

/// Stable 64-bit FNV-1a over the device id string. Used instead of the
/// std hasher so hashes survive across runs and processes.
pub fn device_hash(id: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hours since the epoch on the fixed UTC-5 clock.
pub fn local_hour(utc_secs: i64) -> i64 {
    (utc_secs - EST_OFFSET_SECS).div_euclid(3600)
}

/// Days since 1970-01-01 on the fixed UTC-5 clock.
pub fn local_day(utc_secs: i64) -> i64 {
    (utc_secs - EST_OFFSET_SECS).div_euclid(86400)
}

/// Equirectangular projection around `ref_lat`:
/// x = R * rad(lon - lon0) * cos(rad(ref_lat)), y = R * rad(lat - lat0).
pub fn project(lon: f64, lat: f64, ref_lat: f64, origin: (f64, f64)) -> (f64, f64) {
    let (lon0, lat0) = origin;
    let x = EARTH_RADIUS_M * (lon - lon0).to_radians() * ref_lat.to_radians().cos();
    let y = EARTH_RADIUS_M * (lat - lat0).to_radians();
    (x, y)
}

/// Inverse of [`project`].
pub fn unproject(x: f64, y: f64, ref_lat: f64, origin: (f64, f64)) -> (f64, f64) {
    let (lon0, lat0) = origin;
    let lon = lon0 + (x / (EARTH_RADIUS_M * ref_lat.to_radians().cos())).to_degrees();
    let lat = lat0 + (y / EARTH_RADIUS_M).to_degrees();
    (lon, lat)
}

/// Parses a timestamp field: integer or fractional epoch seconds, or an
/// RFC 3339 / ISO-8601 instant like `2020-02-16T08:00:00Z`.
pub fn parse_timestamp(text: &str) -> Option<i64> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if let Ok(secs) = t.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(secs) = t.parse::<f64>() {
        if secs.is_finite() {
            return Some(secs.floor() as i64);
        }
        return None;
    }
    chrono::DateTime::parse_from_rfc3339(t)
        .ok()
        .map(|dt| dt.timestamp())
}

/// Streaming CSV ping reader. Malformed rows are counted and skipped;
/// they never abort the stream. Row order is preserved.
pub struct PingReader<R: Read> {
    reader: csv::Reader<R>,
    record: csv::StringRecord,
    rejected: u64,
}

const PING_HEADER: [&str; 4] = ["device_id", "timestamp", "latitude", "longitude"];

impl<R: Read> PingReader<R> {
    pub fn new(input: R) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(input);
        let headers = reader.headers().map_err(|_| IngestError::MissingHeader)?;
        let ok = headers.len() == 4
            && headers
                .iter()
                .zip(PING_HEADER)
                .all(|(h, want)| h.trim().eq_ignore_ascii_case(want));
        if !ok {
            return Err(IngestError::MissingHeader);
        }
        Ok(PingReader {
            reader,
            record: csv::StringRecord::new(),
            rejected: 0,
        })
    }

    /// Rows skipped so far (valid only after the stream is drained).
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    fn parse_record(record: &csv::StringRecord) -> Option<RawPing> {
        if record.len() != 4 {
            return None;
        }
        let device_id = record.get(0)?.trim();
        if device_id.is_empty() {
            return None;
        }
        let timestamp = parse_timestamp(record.get(1)?)?;
        let lat: f64 = record.get(2)?.trim().parse().ok()?;
        let lon: f64 = record.get(3)?.trim().parse().ok()?;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return None;
        }
        Some(RawPing {
            device_id: device_id.to_string(),
            timestamp,
            lon,
            lat,
        })
    }
}

impl<R: Read> Iterator for PingReader<R> {
    type Item = RawPing;

    fn next(&mut self) -> Option<RawPing> {
        loop {
            match self.reader.read_record(&mut self.record) {
                Ok(true) => match Self::parse_record(&self.record) {
                    Some(ping) => return Some(ping),
                    None => self.rejected += 1,
                },
                Ok(false) => return None,
                Err(_) => self.rejected += 1,
            }
        }
    }
}

/// Opens a ping CSV, transparently decoding `.gz` inputs.
pub fn open_ping_file(path: &Path) -> Result<Box<dyn Read>, IngestError> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(MultiGzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

/// Counters reported by the ingest stage.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct IngestStats {
    pub parsed: u64,
    pub rejected_rows: u64,
    pub outside_bbox: u64,
    pub devices_seen: u64,
    pub devices_active: u64,
    pub dropped_inactive_pings: u64,
}

/// Applies the bbox filter, projects, and adjusts clocks for one raw
/// ping. Returns None when the ping falls outside the box.
pub fn prepare_ping(raw: &RawPing, bbox: &BoundingBox) -> Option<Ping> {
    if !bbox.contains(raw.lat, raw.lon) {
        return None;
    }
    let (x, y) = project(
        raw.lon,
        raw.lat,
        bbox.center_lat(),
        (bbox.min_lon, bbox.min_lat),
    );
    Some(Ping {
        device: device_hash(&raw.device_id),
        local_hour: local_hour(raw.timestamp),
        x: x as f32,
        y: y as f32,
    })
}

/// Set of devices with at least `min_days` distinct active local dates.
///
/// Counting is sort-based over (device, day) pairs, so the result is
/// independent of ping order and of how the input was sharded.
pub fn active_devices(pings: &[Ping], min_days: u32) -> HashSet<u64> {
    let mut pairs: Vec<(u64, i64)> = pings.iter().map(|p| (p.device, p.local_day())).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut active = HashSet::new();
    let mut i = 0;
    while i < pairs.len() {
        let device = pairs[i].0;
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == device {
            j += 1;
        }
        if (j - i) as u32 >= min_days {
            active.insert(device);
        }
        i = j;
    }
    active
}

/// Retains all pings of devices active on at least `min_days` distinct
/// local dates over the whole study window; drops every ping of other
/// devices. Monotone in `min_days`.
pub fn filter_active_devices(pings: Vec<Ping>, min_days: u32) -> (Vec<Ping>, IngestStats) {
    let mut stats = IngestStats::default();
    let mut devices: Vec<u64> = pings.iter().map(|p| p.device).collect();
    devices.sort_unstable();
    devices.dedup();
    stats.devices_seen = devices.len() as u64;
    let active = active_devices(&pings, min_days);
    stats.devices_active = active.len() as u64;
    let before = pings.len() as u64;
    let kept: Vec<Ping> = pings.into_iter().filter(|p| active.contains(&p.device)).collect();
    stats.dropped_inactive_pings = before - kept.len() as u64;
    (kept, stats)
}

/// Full in-memory ingest: parse -> bbox filter -> project -> activity
/// filter. The caller supplies the raw stream (CSV reader or synthetic
/// generator).
pub fn ingest_stream<I: IntoIterator<Item = RawPing>>(
    raw: I,
    bbox: &BoundingBox,
    min_days: u32,
) -> Result<(Vec<Ping>, IngestStats), IngestError> {
    bbox.validate()?;
    let mut pings = Vec::new();
    let mut stats = IngestStats::default();
    for r in raw {
        stats.parsed += 1;
        match prepare_ping(&r, bbox) {
            Some(p) => pings.push(p),
            None => stats.outside_bbox += 1,
        }
    }
    let (kept, astats) = filter_active_devices(pings, min_days);
    stats.devices_seen = astats.devices_seen;
    stats.devices_active = astats.devices_active;
    stats.dropped_inactive_pings = astats.dropped_inactive_pings;
    Ok((kept, stats))
}

/// Writes pings to `count` shard files named `pings-<i>.shard` in
/// `dir`. Records go to shard `device % count`, preserving input order
/// within a shard, so the layout is independent of thread count.
pub fn write_shards(pings: &[Ping], dir: &Path, count: u32) -> Result<Vec<PathBuf>, IngestError> {
    std::fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = (0..count)
        .map(|i| dir.join(format!("pings-{i:04}.shard")))
        .collect();
    let mut writers: Vec<BufWriter<File>> = paths
        .iter()
        .map(|p| File::create(p).map(BufWriter::new))
        .collect::<Result<_, _>>()?;
    for ping in pings {
        let w = &mut writers[(ping.device % count as u64) as usize];
        w.write_all(&ping.device.to_le_bytes())?;
        w.write_all(&ping.local_hour.to_le_bytes())?;
        w.write_all(&ping.x.to_le_bytes())?;
        w.write_all(&ping.y.to_le_bytes())?;
    }
    for mut w in writers {
        w.flush()?;
    }
    Ok(paths)
}

/// Reads one binary ping shard.
pub fn read_shard(path: &Path) -> Result<Vec<Ping>, IngestError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut pings = Vec::new();
    let mut buf = [0u8; 24];
    loop {
        match read_full(&mut reader, &mut buf)? {
            0 => break,
            24 => pings.push(Ping {
                device: u64::from_le_bytes(buf[0..8].try_into().unwrap()),
                local_hour: i64::from_le_bytes(buf[8..16].try_into().unwrap()),
                x: f32::from_le_bytes(buf[16..20].try_into().unwrap()),
                y: f32::from_le_bytes(buf[20..24].try_into().unwrap()),
            }),
            _ => return Err(IngestError::BadShard(path.to_path_buf())),
        }
    }
    Ok(pings)
}

/// Reads all `*.shard` files in a directory, sorted by file name.
pub fn read_shard_dir(dir: &Path) -> Result<Vec<Vec<Ping>>, IngestError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "shard"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_shard(p)).collect()
}

fn read_full<R: BufRead>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut total = 0;
    while total < buf.len() {
        let n = reader.read(&mut buf[total..])?;
        if n == 0 {
            break;
        }
        total += n;
    }
    Ok(total)
}
