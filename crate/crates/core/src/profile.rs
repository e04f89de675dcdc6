//! Per-location semantic profiles: loading, canonical text rendering, and
//! semantic vectors (imported or produced by a deterministic fallback encoder).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_jsonl;

/// Default semantic vector dimension, matching the codebook encoder input.
pub const DEFAULT_SEMANTIC_DIM: usize = 2048;

/// The closed POI vocabulary, in canonical order.
pub const POI_CATEGORY_NAMES: [&str; 34] = [
    "finance",
    "public",
    "transport",
    "entertainment",
    "health",
    "service",
    "education",
    "government",
    "religion",
    "accommodation",
    "food",
    "cafe",
    "fast_food",
    "ice_cream",
    "pub",
    "restaurant",
    "shop_beauty",
    "shop_clothes",
    "boutique",
    "shop_transport",
    "retail",
    "commodity",
    "marketplace",
    "home-improvement",
    "sport",
    "public_transport",
    "kindergarten",
    "office",
    "recycling",
    "travel_agency",
    "tourism",
    "shop_livelihood",
    "residential",
    "dormitory",
];

pub const N_POI_CATEGORIES: usize = POI_CATEGORY_NAMES.len();

/// Upstream POI tables carry a `gid` column next to the categories. It is a
/// record identifier and is lifted out of the counts on load.
const GID_COLUMN: &str = "gid";

/// Geocoder centers and bounding boxes come from different sources and can
/// disagree by tens of meters; containment is checked with this slack.
pub const BBOX_CENTER_TOLERANCE_DEG: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PoiCategory(u8);

impl PoiCategory {
    pub fn from_name(name: &str) -> Option<Self> {
        POI_CATEGORY_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| PoiCategory(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        POI_CATEGORY_NAMES[self.index()]
    }

    /// Human-readable form used in rendered text ("fast_food" -> "fast food").
    pub fn display_name(self) -> String {
        self.name().replace(['_', '-'], " ")
    }

    pub fn all() -> impl Iterator<Item = PoiCategory> {
        (0..N_POI_CATEGORIES as u8).map(PoiCategory)
    }
}

impl fmt::Display for PoiCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OsmType {
    Node,
    Way,
    Relation,
}

impl fmt::Display for OsmType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OsmType::Node => "node",
            OsmType::Way => "way",
            OsmType::Relation => "relation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

/// One line of the locations file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileRecord {
    pub location_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gid: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    pub center_lat: f64,
    pub center_lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub osm_type: Option<OsmType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub osm_id: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place_id: Option<i64>,
    #[serde(default)]
    pub poi_counts: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationProfile {
    pub location_id: String,
    pub gid: Option<i64>,
    pub address: Option<String>,
    pub center_lat: f64,
    pub center_lon: f64,
    pub bbox: Option<BoundingBox>,
    pub osm_type: Option<OsmType>,
    pub osm_id: Option<i64>,
    pub place_id: Option<i64>,
    /// Indexed by [`PoiCategory::index`].
    pub poi_counts: [u32; N_POI_CATEGORIES],
}

impl LocationProfile {
    pub fn new(location_id: impl Into<String>, center_lat: f64, center_lon: f64) -> Self {
        LocationProfile {
            location_id: location_id.into(),
            gid: None,
            address: None,
            center_lat,
            center_lon,
            bbox: None,
            osm_type: None,
            osm_id: None,
            place_id: None,
            poi_counts: [0; N_POI_CATEGORIES],
        }
    }

    pub fn poi_count(&self, cat: PoiCategory) -> u32 {
        self.poi_counts[cat.index()]
    }

    pub fn set_poi_count(&mut self, cat: PoiCategory, n: u32) {
        self.poi_counts[cat.index()] = n;
    }

    /// Non-zero POI counts in canonical category order.
    pub fn pois(&self) -> impl Iterator<Item = (PoiCategory, u32)> + '_ {
        PoiCategory::all()
            .map(|c| (c, self.poi_count(c)))
            .filter(|(_, n)| *n > 0)
    }

    pub fn from_record(rec: ProfileRecord) -> Result<Self> {
        let invalid = |msg: String| Error::Invalid(format!("{}: {msg}", rec.location_id));
        if rec.location_id.is_empty() {
            return Err(Error::Invalid("empty location_id".into()));
        }
        if !rec.center_lat.is_finite() || !(-90.0..=90.0).contains(&rec.center_lat) {
            return Err(invalid(format!("center_lat {} out of range", rec.center_lat)));
        }
        if !rec.center_lon.is_finite() || !(-180.0..=180.0).contains(&rec.center_lon) {
            return Err(invalid(format!("center_lon {} out of range", rec.center_lon)));
        }
        if let Some(b) = &rec.bbox {
            let finite = [b.min_lat, b.max_lat, b.min_lon, b.max_lon]
                .iter()
                .all(|x| x.is_finite());
            if !finite || b.min_lat > b.max_lat || b.min_lon > b.max_lon {
                return Err(invalid("malformed bounding box".into()));
            }
            let t = BBOX_CENTER_TOLERANCE_DEG;
            let lat_ok = b.min_lat - t <= rec.center_lat && rec.center_lat <= b.max_lat + t;
            let lon_ok = b.min_lon - t <= rec.center_lon && rec.center_lon <= b.max_lon + t;
            if !(lat_ok && lon_ok) {
                return Err(invalid("center lies outside its bounding box".into()));
            }
        }

        let mut gid = rec.gid;
        let mut poi_counts = [0u32; N_POI_CATEGORIES];
        for (name, &value) in &rec.poi_counts {
            if name == GID_COLUMN {
                if gid.is_none() && value.fract() == 0.0 {
                    gid = Some(value as i64);
                }
                continue;
            }
            let cat =
                PoiCategory::from_name(name).ok_or_else(|| Error::UnknownCategory(name.clone()))?;
            if !(value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                return Err(invalid(format!("POI count for {name} must be a non-negative integer")));
            }
            poi_counts[cat.index()] = value as u32;
        }

        Ok(LocationProfile {
            location_id: rec.location_id,
            gid,
            address: rec.address.filter(|a| !a.trim().is_empty()),
            center_lat: rec.center_lat,
            center_lon: rec.center_lon,
            bbox: rec.bbox,
            osm_type: rec.osm_type,
            osm_id: rec.osm_id,
            place_id: rec.place_id,
            poi_counts,
        })
    }

    pub fn to_record(&self) -> ProfileRecord {
        ProfileRecord {
            location_id: self.location_id.clone(),
            gid: self.gid,
            address: self.address.clone(),
            center_lat: self.center_lat,
            center_lon: self.center_lon,
            bbox: self.bbox,
            osm_type: self.osm_type,
            osm_id: self.osm_id,
            place_id: self.place_id,
            poi_counts: self
                .pois()
                .map(|(c, n)| (c.name().to_string(), n as f64))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport<T> {
    pub items: Vec<T>,
    /// `(line, reason)` for every record skipped in lenient mode.
    pub rejected: Vec<(usize, String)>,
}

/// Loads a line-delimited locations file. In strict mode the first invalid
/// record aborts with its line number; otherwise invalid records are skipped
/// and reported.
pub fn load_profiles(path: &Path, strict: bool) -> Result<LoadReport<LocationProfile>> {
    let mut report = LoadReport {
        items: Vec::new(),
        rejected: Vec::new(),
    };
    let mut seen = BTreeSet::new();
    for (line, parsed) in read_jsonl::<ProfileRecord>(path)? {
        let result = parsed
            .map_err(|message| Error::Record { line, message })
            .and_then(|rec| {
                LocationProfile::from_record(rec).map_err(|e| Error::Record {
                    line,
                    message: e.to_string(),
                })
            })
            .and_then(|p| {
                if seen.insert(p.location_id.clone()) {
                    Ok(p)
                } else {
                    Err(Error::Record {
                        line,
                        message: Error::DuplicateKey(p.location_id).to_string(),
                    })
                }
            });
        match result {
            Ok(p) => report.items.push(p),
            Err(e) if strict => return Err(e),
            Err(e) => report.rejected.push((line, e.to_string())),
        }
    }
    Ok(report)
}

/// Canonical description of a profile: address, coordinates and boundary,
/// OSM details, POIs, one section per line. Missing optional fields drop
/// their section.
pub fn render_profile_text(p: &LocationProfile) -> String {
    let mut lines: Vec<String> = Vec::with_capacity(4);

    if let Some(addr) = &p.address {
        let addr = addr.trim().trim_end_matches('.');
        lines.push(format!("The location is situated at {addr}."));
    }

    let mut geo = format!(
        "The center of the location is at latitude {} and longitude {}.",
        p.center_lat, p.center_lon
    );
    if let Some(b) = &p.bbox {
        write!(
            geo,
            " The area is bounded by: minimum latitude {}, maximum latitude {}, minimum longitude {}, maximum longitude {}.",
            b.min_lat, b.max_lat, b.min_lon, b.max_lon
        )
        .unwrap();
    }
    lines.push(geo);

    let mut osm = Vec::new();
    if let Some(t) = p.osm_type {
        osm.push(format!("OSM Type: {t}"));
    }
    if let Some(id) = p.osm_id {
        osm.push(format!("OSM ID: {id}"));
    }
    if let Some(id) = p.place_id {
        osm.push(format!("Place ID: {id}"));
    }
    if !osm.is_empty() {
        lines.push(format!("OpenStreetMap (OSM) details: {}.", osm.join(", ")));
    }

    let pois: Vec<String> = p
        .pois()
        .map(|(c, n)| format!("{n} {}", c.display_name()))
        .collect();
    if pois.is_empty() {
        lines.push("The location includes no points of interest.".to_string());
    } else {
        lines.push(format!("The location includes {}.", pois.join(", ")));
    }

    lines.join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorSource {
    Imported,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticVector {
    pub values: Vec<f64>,
    pub source: VectorSource,
}

impl SemanticVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub const MIN_FALLBACK_DIM: usize = 8;

/// Below this dimension the POI channels share the hashed text space.
const SEPARATE_POI_MIN_DIM: usize = N_POI_CATEGORIES + MIN_FALLBACK_DIM;

/// Deterministic stand-in for a pre-trained text encoder.
///
/// Character 3-grams of the rendered text are feature-hashed into the first
/// `d - 34` dimensions, and `ln(1 + count)` for every POI category fills the
/// last 34. Each block is normalized separately, then the whole vector.
pub fn encode_profile_fallback(p: &LocationProfile, d: usize, seed: u64) -> Result<SemanticVector> {
    if d < MIN_FALLBACK_DIM {
        return Err(Error::Invalid(format!(
            "fallback dimension {d} is below the minimum {MIN_FALLBACK_DIM}"
        )));
    }
    let text_dim = if d >= SEPARATE_POI_MIN_DIM {
        d - N_POI_CATEGORIES
    } else {
        d
    };

    let mut text = vec![0.0; text_dim];
    let chars: Vec<char> = render_profile_text(p).to_lowercase().chars().collect();
    let mut gram = String::with_capacity(12);
    for w in chars.windows(3) {
        gram.clear();
        gram.extend(w);
        let h = mix64(fnv1a(gram.as_bytes(), seed));
        let idx = (h % text_dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        text[idx] += sign;
    }
    normalize_in_place(&mut text);

    let mut poi = vec![0.0; N_POI_CATEGORIES];
    for (c, n) in p.pois() {
        poi[c.index()] = (n as f64).ln_1p();
    }
    normalize_in_place(&mut poi);

    let mut values = text;
    if d >= SEPARATE_POI_MIN_DIM {
        values.extend_from_slice(&poi);
    } else {
        for (i, x) in poi.iter().enumerate() {
            values[i % d] += x;
        }
    }
    if !normalize_in_place(&mut values) {
        return Err(Error::Numerical(format!(
            "fallback vector for {} has zero norm",
            p.location_id
        )));
    }
    Ok(SemanticVector {
        values,
        source: VectorSource::Fallback,
    })
}

fn normalize_in_place(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
        true
    } else {
        false
    }
}

/// 64-bit FNV-1a with the seed folded into the offset basis.
pub(crate) fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// splitmix64 finalizer; spreads FNV output over all bits.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub location_id: String,
    pub values: Vec<f64>,
}

/// Imports externally computed semantic vectors. All records must share one
/// dimension (and match `expected_dim` when given); keys must be unique.
pub fn import_embeddings(
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<BTreeMap<String, SemanticVector>> {
    let mut out = BTreeMap::new();
    let mut dim = expected_dim;
    for (line, parsed) in read_jsonl::<EmbeddingRecord>(path)? {
        let rec = parsed.map_err(|message| Error::Record { line, message })?;
        let d = *dim.get_or_insert(rec.values.len());
        if rec.values.len() != d {
            return Err(Error::Record {
                line,
                message: Error::DimensionMismatch {
                    expected: d,
                    found: rec.values.len(),
                }
                .to_string(),
            });
        }
        if rec.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "embedding {} (line {line})",
                rec.location_id
            )));
        }
        if out.contains_key(&rec.location_id) {
            return Err(Error::DuplicateKey(rec.location_id));
        }
        out.insert(
            rec.location_id,
            SemanticVector {
                values: rec.values,
                source: VectorSource::Imported,
            },
        );
    }
    Ok(out)
}
