//! Rasterization oracles: classification must agree with a direct
//! point-in-polygon check applied in priority order at cell centers,
//! and coarse indexing must agree with exact rational arithmetic.

use exposure_core::geom::{Point, Polygon, Ring};
use exposure_core::grid::{GridSpec, LandUseClass};
use exposure_core::ingest::project;
use exposure_core::raster::{rasterize, LandUseRaster, LayerSource, RasterizeOptions};

use num::{BigRational, FromPrimitive, Signed, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec_200() -> GridSpec {
    GridSpec {
        origin_x: -40.0,
        origin_y: 25.0,
        fine_cell: 1.0,
        coarse_cell: 100.0,
        coarse_cols: 2,
        coarse_rows: 2,
    }
}

/// The independent classification route: find the fine cell containing
/// the point, then scan all layers for containment of the cell center
/// and keep the (priority, input order) maximum.
fn oracle_classify(layers: &[LayerSource], spec: &GridSpec, x: f64, y: f64) -> u8 {
    let Some((col, row)) = spec.fine_index(x, y) else {
        return 0;
    };
    let cx = spec.origin_x + (col as f64 + 0.5) * spec.fine_cell;
    let cy = spec.origin_y + (row as f64 + 0.5) * spec.fine_cell;
    let mut best: Option<(i32, usize, u8)> = None;
    for (idx, layer) in layers.iter().enumerate() {
        if exposure_core::geom::multi_contains(&layer.polygons, cx, cy) {
            let key = (layer.priority, idx, layer.class.code());
            if best.map_or(true, |(p, i, _)| (layer.priority, idx) > (p, i)) {
                best = Some(key);
            }
        }
    }
    best.map_or(0, |(_, _, code)| code)
}

fn random_layer(rng: &mut ChaCha8Rng, spec: &GridSpec) -> LayerSource {
    let w = spec.coarse_cols as f64 * spec.coarse_cell;
    let h = spec.coarse_rows as f64 * spec.coarse_cell;
    let rx = |rng: &mut ChaCha8Rng| spec.origin_x - 20.0 + rng.random::<f64>() * (w + 40.0);
    let ry = |rng: &mut ChaCha8Rng| spec.origin_y - 20.0 + rng.random::<f64>() * (h + 40.0);
    let class = [10u8, 20, 50, 60][rng.random_range(0..4)];
    let priority = rng.random_range(1..5);
    let polygons = match rng.random_range(0..3) {
        // axis-aligned rectangle
        0 => {
            let (x0, x1) = (rx(rng), rx(rng));
            let (y0, y1) = (ry(rng), ry(rng));
            vec![Polygon::rect(x0.min(x1), y0.min(y1), x0.max(x1) + 1.0, y0.max(y1) + 1.0)]
        }
        // triangle
        1 => {
            let pts = vec![
                Point::new(rx(rng), ry(rng)),
                Point::new(rx(rng), ry(rng)),
                Point::new(rx(rng), ry(rng)),
            ];
            vec![Polygon::new(vec![Ring::closed(pts).unwrap()]).unwrap()]
        }
        // rectangle with a rectangular hole
        _ => {
            let (x0, x1) = (rx(rng), rx(rng));
            let (y0, y1) = (ry(rng), ry(rng));
            let (x0, x1) = (x0.min(x1), x0.max(x1) + 40.0);
            let (y0, y1) = (y0.min(y1), y0.max(y1) + 40.0);
            let hx0 = x0 + (x1 - x0) * 0.25;
            let hx1 = x0 + (x1 - x0) * 0.6;
            let hy0 = y0 + (y1 - y0) * 0.3;
            let hy1 = y0 + (y1 - y0) * 0.7;
            let outer = Ring::new(vec![
                Point::new(x0, y0),
                Point::new(x1, y0),
                Point::new(x1, y1),
                Point::new(x0, y1),
                Point::new(x0, y0),
            ])
            .unwrap();
            let hole = Ring::new(vec![
                Point::new(hx0, hy0),
                Point::new(hx1, hy0),
                Point::new(hx1, hy1),
                Point::new(hx0, hy1),
                Point::new(hx0, hy0),
            ])
            .unwrap();
            vec![Polygon::new(vec![outer, hole]).unwrap()]
        }
    };
    LayerSource {
        polygons,
        class: LandUseClass(class),
        priority,
    }
}

#[test]
fn classify_matches_point_in_polygon_oracle_over_scenarios() {
    let spec = spec_200();
    let mut mismatches = 0u32;
    for scenario in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + scenario);
        let layers: Vec<LayerSource> = (0..rng.random_range(6..14))
            .map(|_| random_layer(&mut rng, &spec))
            .collect();
        let raster = rasterize(&layers, &spec, &RasterizeOptions::default()).unwrap();
        for _ in 0..1000 {
            // points both inside and slightly outside the extent
            let x = spec.origin_x - 10.0 + rng.random::<f64>() * 220.0;
            let y = spec.origin_y - 10.0 + rng.random::<f64>() * 220.0;
            let got = raster.classify_point(x, y).code();
            let want = oracle_classify(&layers, &spec, x, y);
            if got != want {
                mismatches += 1;
                eprintln!("scenario {scenario}: ({x},{y}) got {got} want {want}");
            }
        }
    }
    assert_eq!(mismatches, 0, "classification must match the oracle exactly");
}

#[test]
fn building_over_parcel_priority_exhaustive_cell_centers() {
    let spec = GridSpec {
        origin_x: 0.0,
        origin_y: 0.0,
        fine_cell: 1.0,
        coarse_cell: 10.0,
        coarse_cols: 3,
        coarse_rows: 2,
    };
    let layers = vec![
        LayerSource {
            polygons: vec![Polygon::rect(2.0, 2.0, 26.0, 17.0)],
            class: LandUseClass::RESIDENTIAL,
            priority: 1,
        },
        LayerSource {
            polygons: vec![Polygon::rect(8.0, 5.0, 19.0, 12.0)],
            class: LandUseClass::NON_RESIDENTIAL,
            priority: 3,
        },
    ];
    let raster = rasterize(&layers, &spec, &RasterizeOptions::default()).unwrap();
    for row in 0..spec.fine_height() {
        for col in 0..spec.fine_width() {
            let cx = col as f64 + 0.5;
            let cy = row as f64 + 0.5;
            let want = oracle_classify(&layers, &spec, cx, cy);
            assert_eq!(raster.cell_code(col, row), want, "cell ({col},{row})");
        }
    }
    // overlap cells carry the building class
    assert_eq!(raster.cell_code(10, 6), 20);
    assert_eq!(raster.cell_code(3, 3), 10);
}

#[test]
fn rasterize_same_input_twice_is_bit_identical() {
    let spec = spec_200();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let layers: Vec<LayerSource> = (0..10).map(|_| random_layer(&mut rng, &spec)).collect();
    let a = rasterize(&layers, &spec, &RasterizeOptions::default()).unwrap();
    let b = rasterize(&layers, &spec, &RasterizeOptions::default()).unwrap();
    for row in 0..spec.fine_height() {
        for col in 0..spec.fine_width() {
            assert_eq!(a.cell_code(col, row), b.cell_code(col, row));
        }
    }
    assert_eq!(a.census(), b.census());
}

#[test]
fn binary_round_trip_random_scenario() {
    let spec = spec_200();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let layers: Vec<LayerSource> = (0..8).map(|_| random_layer(&mut rng, &spec)).collect();
    let raster = rasterize(&layers, &spec, &RasterizeOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.exr1");
    raster.write_binary(&path).unwrap();
    let back = LandUseRaster::read_binary(&path, spec.coarse_cell).unwrap();
    assert_eq!(back.census(), raster.census());
    for _ in 0..500 {
        let x = spec.origin_x + rng.random::<f64>() * 200.0;
        let y = spec.origin_y + rng.random::<f64>() * 200.0;
        assert_eq!(back.classify_point(x, y), raster.classify_point(x, y));
    }
}

/// Exact-arithmetic coarse-index oracle: floor((x - origin) / coarse)
/// computed in BigRational, where every f64 input is exact.
fn oracle_coarse(spec: &GridSpec, x: f64, y: f64) -> Option<(u32, u32)> {
    let r = |v: f64| BigRational::from_f64(v).unwrap();
    let fdiv = |a: BigRational, b: BigRational| -> i64 {
        let q = a / b;
        let fl = q.floor();
        fl.to_integer().to_i64().unwrap()
    };
    let col = fdiv(r(x) - r(spec.origin_x), r(spec.coarse_cell));
    let row = fdiv(r(y) - r(spec.origin_y), r(spec.coarse_cell));
    if col < 0 || row < 0 || col >= spec.coarse_cols as i64 || row >= spec.coarse_rows as i64 {
        None
    } else {
        Some((col as u32, row as u32))
    }
}

#[test]
fn coarse_index_matches_exact_rational_oracle() {
    let spec = GridSpec {
        origin_x: -3271.25,
        origin_y: 1017.5,
        ..GridSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5000 {
        let x = spec.origin_x - 500.0 + rng.random::<f64>() * (187.0 * 250.0 + 1000.0);
        let y = spec.origin_y - 500.0 + rng.random::<f64>() * (186.0 * 250.0 + 1000.0);
        assert_eq!(
            spec.coarse_index(x, y),
            oracle_coarse(&spec, x, y),
            "point ({x},{y})"
        );
    }
    // exact boundary points from the definition
    assert_eq!(spec.coarse_index(spec.origin_x, spec.origin_y), Some((0, 0)));
    assert_eq!(
        spec.coarse_index(spec.origin_x + 250.0, spec.origin_y),
        Some((1, 0))
    );
}

#[test]
fn coarse_cell_always_contains_fine_cell() {
    // classification and coarse indexing agree: a point's coarse cell
    // is the one its fine cell nests inside.
    let spec = spec_200();
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..2000 {
        let x = spec.origin_x + rng.random::<f64>() * 200.0;
        let y = spec.origin_y + rng.random::<f64>() * 200.0;
        let fine = spec.fine_index(x, y).unwrap();
        let coarse = spec.coarse_index(x, y).unwrap();
        let per = spec.fine_per_coarse() as u64;
        assert_eq!((fine.0 / per) as u32, coarse.0);
        assert_eq!((fine.1 / per) as u32, coarse.1);
    }
}

#[test]
fn projection_hand_derived_value() {
    // x = R * rad(delta_lon) * cos(rad(ref_lat)) evaluated by hand for
    // delta_lon = 1e-3 degrees at ref_lat = 40.7:
    // 6371000 * 1.7453292519943296e-8 ... recomputed here from scratch.
    let want_x = 6_371_000.0 * (1e-3f64).to_radians() * (40.7f64).to_radians().cos();
    let (x, y) = project(-74.0 + 1e-3, 40.7, 40.7, (-74.0, 40.7));
    assert!((x - want_x).abs() < 1e-9, "x={x} want={want_x}");
    assert!(y.abs() < 1e-12);
    // frozen magnitude: ~84.30 m per millidegree of longitude at 40.7 N
    assert!((x - 84.3025).abs() < 0.01, "x={x}");
}
