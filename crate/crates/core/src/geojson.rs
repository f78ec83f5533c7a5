//! Minimal GeoJSON reader for the two inputs the pipeline accepts:
//! land-use layers (Feature properties `lu_class` and `priority`) and
//! zone polygons (Feature property `zone_id`). Coordinates are expected
//! to be already projected to meters.

use serde::Deserialize;

use crate::geom::{Point, Polygon, Ring};
use crate::grid::LandUseClass;
use crate::raster::LayerSource;

#[derive(Debug, thiserror::Error)]
pub enum GeoJsonError {
    #[error("json parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected a FeatureCollection, got {0}")]
    NotACollection(String),
    #[error("feature {index}: {message}")]
    Feature { index: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Deserialize)]
struct Collection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<Feature>,
}

#[derive(Deserialize)]
struct Feature {
    geometry: Geometry,
    #[serde(default)]
    properties: serde_json::Map<String, serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(tag = "type")]
enum Geometry {
    Polygon { coordinates: Vec<Vec<[f64; 2]>> },
    MultiPolygon { coordinates: Vec<Vec<Vec<[f64; 2]>>> },
}

fn rings_to_polygon(rings: &[Vec<[f64; 2]>], index: usize) -> Result<Polygon, GeoJsonError> {
    let mut out = Vec::with_capacity(rings.len());
    for ring in rings {
        let pts = ring.iter().map(|c| Point::new(c[0], c[1])).collect();
        out.push(Ring::new(pts).map_err(|e| GeoJsonError::Feature {
            index,
            message: e.to_string(),
        })?);
    }
    Polygon::new(out).map_err(|e| GeoJsonError::Feature {
        index,
        message: e.to_string(),
    })
}

fn feature_polygons(feature: &Feature, index: usize) -> Result<Vec<Polygon>, GeoJsonError> {
    match &feature.geometry {
        Geometry::Polygon { coordinates } => Ok(vec![rings_to_polygon(coordinates, index)?]),
        Geometry::MultiPolygon { coordinates } => coordinates
            .iter()
            .map(|poly| rings_to_polygon(poly, index))
            .collect(),
    }
}

fn parse_collection(text: &str) -> Result<Collection, GeoJsonError> {
    let coll: Collection = serde_json::from_str(text)?;
    if coll.kind != "FeatureCollection" {
        return Err(GeoJsonError::NotACollection(coll.kind));
    }
    Ok(coll)
}

fn int_property(feature: &Feature, name: &str, index: usize) -> Result<i64, GeoJsonError> {
    feature
        .properties
        .get(name)
        .and_then(|v| v.as_i64())
        .ok_or_else(|| GeoJsonError::Feature {
            index,
            message: format!("missing integer property `{name}`"),
        })
}

/// Parses land-use layers from a FeatureCollection. Every feature needs
/// integer `lu_class` and `priority` properties.
pub fn parse_layers(text: &str) -> Result<Vec<LayerSource>, GeoJsonError> {
    let coll = parse_collection(text)?;
    let mut layers = Vec::with_capacity(coll.features.len());
    for (i, feature) in coll.features.iter().enumerate() {
        let class = int_property(feature, "lu_class", i)?;
        let priority = int_property(feature, "priority", i)?;
        if !(0..=255).contains(&class) {
            return Err(GeoJsonError::Feature {
                index: i,
                message: format!("lu_class {class} out of byte range"),
            });
        }
        layers.push(LayerSource {
            polygons: feature_polygons(feature, i)?,
            class: LandUseClass(class as u8),
            priority: priority as i32,
        });
    }
    Ok(layers)
}

/// Parses zone polygons from a FeatureCollection. Every feature needs a
/// `zone_id` property (string or number).
pub fn parse_zones(text: &str) -> Result<Vec<(String, Vec<Polygon>)>, GeoJsonError> {
    let coll = parse_collection(text)?;
    let mut zones = Vec::with_capacity(coll.features.len());
    for (i, feature) in coll.features.iter().enumerate() {
        let id = match feature.properties.get("zone_id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => {
                return Err(GeoJsonError::Feature {
                    index: i,
                    message: "missing `zone_id` property".into(),
                })
            }
        };
        zones.push((id, feature_polygons(feature, i)?));
    }
    Ok(zones)
}

/// Serializes layers back to GeoJSON (used by the synthetic generator so
/// its output is bit-stable and round-trips through `parse_layers`).
pub fn layers_to_geojson(layers: &[LayerSource]) -> String {
    let mut features = Vec::with_capacity(layers.len());
    for layer in layers {
        let coords: Vec<Vec<Vec<[f64; 2]>>> = layer
            .polygons
            .iter()
            .map(|p| {
                p.rings
                    .iter()
                    .map(|r| r.points().iter().map(|pt| [pt.x, pt.y]).collect())
                    .collect()
            })
            .collect();
        let geometry = if coords.len() == 1 {
            serde_json::json!({"type": "Polygon", "coordinates": coords[0]})
        } else {
            serde_json::json!({"type": "MultiPolygon", "coordinates": coords})
        };
        features.push(serde_json::json!({
            "type": "Feature",
            "geometry": geometry,
            "properties": {"lu_class": layer.class.code(), "priority": layer.priority},
        }));
    }
    serde_json::to_string(&serde_json::json!({
        "type": "FeatureCollection",
        "features": features,
    }))
    .expect("geojson serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_polygon_layer() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"lu_class":10,"priority":1},
             "geometry":{"type":"Polygon","coordinates":[[[0.0,0.0],[4.0,0.0],[4.0,4.0],[0.0,4.0],[0.0,0.0]]]}}
        ]}"#;
        let layers = parse_layers(text).unwrap();
        assert_eq!(layers.len(), 1);
        assert_eq!(layers[0].class, LandUseClass::RESIDENTIAL);
        assert_eq!(layers[0].priority, 1);
        assert!(layers[0].polygons[0].contains(2.0, 2.0));
    }

    #[test]
    fn missing_property_is_reported_with_index() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"priority":1},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}}
        ]}"#;
        let err = parse_layers(text).unwrap_err();
        assert!(err.to_string().contains("feature 0"));
        assert!(err.to_string().contains("lu_class"));
    }

    #[test]
    fn unclosed_ring_is_invalid_geometry() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"lu_class":10,"priority":1},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}}
        ]}"#;
        assert!(parse_layers(text).is_err());
    }

    #[test]
    fn zone_ids_accept_numbers_and_strings() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"zone_id":"11201"},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
            {"type":"Feature","properties":{"zone_id":11202},
             "geometry":{"type":"Polygon","coordinates":[[[2,0],[3,0],[3,1],[2,1],[2,0]]]}}
        ]}"#;
        let zones = parse_zones(text).unwrap();
        assert_eq!(zones[0].0, "11201");
        assert_eq!(zones[1].0, "11202");
    }

    #[test]
    fn layers_round_trip_through_geojson() {
        let layers = vec![LayerSource {
            polygons: vec![crate::geom::Polygon::rect(0.0, 0.0, 8.0, 4.0)],
            class: LandUseClass::OUTDOOR,
            priority: 2,
        }];
        let text = layers_to_geojson(&layers);
        let back = parse_layers(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].class, LandUseClass::OUTDOOR);
        assert_eq!(back[0].polygons[0], layers[0].polygons[0]);
    }
}
