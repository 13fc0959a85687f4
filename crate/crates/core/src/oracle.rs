//! Verdict sources consulted at settlement.
//!
//! Two kinds exist: a scripted lookup table used to replay demonstration
//! flows, and a geospatial oracle that measures how much vegetation a parcel
//! kept between two land-cover snapshots.
//!
//! The preserved fraction is the ratio of area-weighted vegetation inside
//! the parcel at maturity to the same quantity at the first snapshot:
//!
//! ```text
//!   Σ overlap(cell, parcel) · veg_t1(cell)
//!   ──────────────────────────────────────
//!   Σ overlap(cell, parcel) · veg_t0(cell)
//! ```
//!
//! with overlaps measured in degree². Regrowth yields values above 1, which
//! are reported as is.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::canonical::{sha256_hex, to_canonical_string};
use crate::clock::SimTime;
use crate::escrow::{overlap_1d, ContractId, EscrowContract, Parcel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("no scripted verdict for contract `{0}`")]
    NoScriptEntry(ContractId),
    #[error("land-cover snapshots differ in bounding box or resolution")]
    GridMismatch,
    #[error("parcel does not intersect the grid")]
    NoIntersection,
    #[error("parcel has no initial vegetation")]
    DegenerateParcel,
    #[error("invalid land-cover grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Scripted,
    GeoRaster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub contract_id: ContractId,
    pub source: OracleKind,
    pub preserved_fraction: f64,
    pub verdict: bool,
    pub evidence_hash: String,
    pub issued_at: SimTime,
}

pub trait Oracle {
    fn verdict(
        &self,
        contract: &EscrowContract,
        now: SimTime,
    ) -> Result<OracleVerdict, OracleError>;
}

/// Raster of vegetation fractions over a bounding box.
///
/// Cells are row-major with row 0 at the northern edge (`lat_max`) and
/// column 0 at the western edge (`lon_min`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct LandCoverGrid {
    bbox: Parcel,
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
    epoch: SimTime,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    bbox: Parcel,
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
    epoch: SimTime,
}

impl TryFrom<RawGrid> for LandCoverGrid {
    type Error = OracleError;

    fn try_from(raw: RawGrid) -> Result<Self, Self::Error> {
        LandCoverGrid::new(raw.bbox, raw.rows, raw.cols, raw.cells, raw.epoch)
    }
}

impl LandCoverGrid {
    pub fn new(
        bbox: Parcel,
        rows: usize,
        cols: usize,
        cells: Vec<f64>,
        epoch: SimTime,
    ) -> Result<Self, OracleError> {
        if rows == 0 || cols == 0 {
            return Err(OracleError::InvalidGrid(
                "rows and cols must be positive".into(),
            ));
        }
        if rows.checked_mul(cols) != Some(cells.len()) {
            return Err(OracleError::InvalidGrid(format!(
                "{rows}x{cols} grid needs {} cells, got {}",
                rows.saturating_mul(cols),
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(OracleError::InvalidGrid(format!(
                "cell value {bad} outside [0, 1]"
            )));
        }
        Ok(LandCoverGrid {
            bbox,
            rows,
            cols,
            cells,
            epoch,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self, OracleError> {
        serde_json::from_str(text).map_err(|e| OracleError::InvalidGrid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OracleError::InvalidGrid(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn bbox(&self) -> &Parcel {
        &self.bbox
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn epoch(&self) -> SimTime {
        self.epoch
    }

    pub fn cell(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.cols + col]
    }

    /// Latitude band `[south, north]` of a row.
    pub fn row_band(&self, row: usize) -> (f64, f64) {
        let (lo, hi) = (self.bbox.lat_min(), self.bbox.lat_max());
        (
            edge(lo, hi, self.rows - row - 1, self.rows),
            edge(lo, hi, self.rows - row, self.rows),
        )
    }

    /// Longitude band `[west, east]` of a column.
    pub fn col_band(&self, col: usize) -> (f64, f64) {
        let (lo, hi) = (self.bbox.lon_min(), self.bbox.lon_max());
        (
            edge(lo, hi, col, self.cols),
            edge(lo, hi, col + 1, self.cols),
        )
    }

    fn same_layout(&self, other: &LandCoverGrid) -> bool {
        self.bbox == other.bbox && self.rows == other.rows && self.cols == other.cols
    }
}

fn edge(lo: f64, hi: f64, k: usize, n: usize) -> f64 {
    if k == 0 {
        lo
    } else if k == n {
        hi
    } else {
        lo + (hi - lo) * (k as f64) / (n as f64)
    }
}

/// Area-weighted vegetation ratio of `grid_t1` to `grid_t0` inside `parcel`.
pub fn compute_preserved_fraction(
    parcel: &Parcel,
    grid_t0: &LandCoverGrid,
    grid_t1: &LandCoverGrid,
) -> Result<f64, OracleError> {
    if !grid_t0.same_layout(grid_t1) {
        return Err(OracleError::GridMismatch);
    }
    if parcel.overlap_area(grid_t0.bbox()) <= 0.0 {
        return Err(OracleError::NoIntersection);
    }
    // Overlap of a cell is separable: lat extent of its row times lon extent of its column.
    let lat_overlap: Vec<f64> = (0..grid_t0.rows)
        .map(|r| {
            let (s, n) = grid_t0.row_band(r);
            overlap_1d(s, n, parcel.lat_min(), parcel.lat_max())
        })
        .collect();
    let lon_overlap: Vec<f64> = (0..grid_t0.cols)
        .map(|c| {
            let (w, e) = grid_t0.col_band(c);
            overlap_1d(w, e, parcel.lon_min(), parcel.lon_max())
        })
        .collect();

    let mut before = 0.0;
    let mut after = 0.0;
    for (r, lat_w) in lat_overlap.iter().enumerate() {
        if *lat_w == 0.0 {
            continue;
        }
        for (c, lon_w) in lon_overlap.iter().enumerate() {
            let w = lat_w * lon_w;
            if w == 0.0 {
                continue;
            }
            before += w * grid_t0.cell(r, c);
            after += w * grid_t1.cell(r, c);
        }
    }
    if before <= 0.0 {
        return Err(OracleError::DegenerateParcel);
    }
    Ok(after / before)
}

/// Digest binding a verdict to the exact parcel and snapshots it was computed from.
pub fn evidence_hash(parcel: &Parcel, grid_t0: &LandCoverGrid, grid_t1: &LandCoverGrid) -> String {
    let evidence = json!({ "parcel": parcel, "t0": grid_t0, "t1": grid_t1 });
    sha256_hex(to_canonical_string(&evidence))
}

pub fn geo_verdict(
    contract: &EscrowContract,
    grid_t0: &LandCoverGrid,
    grid_t1: &LandCoverGrid,
    now: SimTime,
) -> Result<OracleVerdict, OracleError> {
    let fraction = compute_preserved_fraction(&contract.parcel, grid_t0, grid_t1)?;
    Ok(OracleVerdict {
        contract_id: contract.id.clone(),
        source: OracleKind::GeoRaster,
        preserved_fraction: fraction,
        verdict: fraction >= contract.threshold,
        evidence_hash: evidence_hash(&contract.parcel, grid_t0, grid_t1),
        issued_at: now,
    })
}

/// Deterministic lookup table of verdicts keyed by contract.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedOracle {
    table: BTreeMap<ContractId, bool>,
}

impl ScriptedOracle {
    pub fn new(entries: impl IntoIterator<Item = (ContractId, bool)>) -> Self {
        ScriptedOracle {
            table: entries.into_iter().collect(),
        }
    }

    pub fn scripted_verdict(
        &self,
        contract_id: &ContractId,
        now: SimTime,
    ) -> Result<OracleVerdict, OracleError> {
        let verdict = *self
            .table
            .get(contract_id)
            .ok_or_else(|| OracleError::NoScriptEntry(contract_id.clone()))?;
        let evidence = json!({ "contract_id": contract_id, "verdict": verdict });
        Ok(OracleVerdict {
            contract_id: contract_id.clone(),
            source: OracleKind::Scripted,
            preserved_fraction: if verdict { 1.0 } else { 0.0 },
            verdict,
            evidence_hash: sha256_hex(to_canonical_string(&evidence)),
            issued_at: now,
        })
    }
}

impl Oracle for ScriptedOracle {
    fn verdict(
        &self,
        contract: &EscrowContract,
        now: SimTime,
    ) -> Result<OracleVerdict, OracleError> {
        self.scripted_verdict(&contract.id, now)
    }
}

/// A pair of snapshots sharing bounding box and resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoRasterOracle {
    t0: LandCoverGrid,
    t1: LandCoverGrid,
}

impl GeoRasterOracle {
    pub fn new(t0: LandCoverGrid, t1: LandCoverGrid) -> Result<Self, OracleError> {
        if !t0.same_layout(&t1) {
            return Err(OracleError::GridMismatch);
        }
        Ok(GeoRasterOracle { t0, t1 })
    }

    pub fn snapshots(&self) -> (&LandCoverGrid, &LandCoverGrid) {
        (&self.t0, &self.t1)
    }
}

impl Oracle for GeoRasterOracle {
    fn verdict(
        &self,
        contract: &EscrowContract,
        now: SimTime,
    ) -> Result<OracleVerdict, OracleError> {
        geo_verdict(contract, &self.t0, &self.t1, now)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleHandle {
    Scripted(ScriptedOracle),
    GeoRaster(GeoRasterOracle),
}

impl Oracle for OracleHandle {
    fn verdict(
        &self,
        contract: &EscrowContract,
        now: SimTime,
    ) -> Result<OracleVerdict, OracleError> {
        match self {
            OracleHandle::Scripted(o) => o.verdict(contract, now),
            OracleHandle::GeoRaster(o) => o.verdict(contract, now),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::escrow::ContractState;
    use crate::ledger::AccountId;
    use proptest::prelude::*;

    fn unit_bbox() -> Parcel {
        Parcel::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    fn grid(cells: &[f64]) -> LandCoverGrid {
        LandCoverGrid::new(unit_bbox(), 2, 2, cells.to_vec(), SimTime(0)).unwrap()
    }

    fn contract(parcel: Parcel, threshold: f64) -> EscrowContract {
        EscrowContract {
            id: ContractId::new("c1"),
            landowner: AccountId::new("land1").unwrap(),
            escrow_account: AccountId::new("escrow:c1").unwrap(),
            parcel,
            created_at: SimTime(0),
            maturity_at: SimTime(365),
            threshold,
            contributions: vec![],
            state: ContractState::Open,
        }
    }

    #[test]
    fn scripted_lookup() {
        let oracle = ScriptedOracle::new([
            (ContractId::new("c1"), true),
            (ContractId::new("c3"), false),
        ]);
        let v = oracle
            .scripted_verdict(&ContractId::new("c1"), SimTime(365))
            .unwrap();
        assert!(v.verdict);
        assert_eq!(v.preserved_fraction, 1.0);
        let v = oracle
            .scripted_verdict(&ContractId::new("c3"), SimTime(365))
            .unwrap();
        assert!(!v.verdict);
        assert_eq!(v.preserved_fraction, 0.0);
        assert_eq!(
            oracle.scripted_verdict(&ContractId::new("c2"), SimTime(365)),
            Err(OracleError::NoScriptEntry(ContractId::new("c2")))
        );
    }

    #[test]
    fn fixture_fractions() {
        let t0 = grid(&[1.0, 1.0, 1.0, 1.0]);
        let mixed = grid(&[1.0, 1.0, 0.5, 0.5]);
        assert_eq!(
            compute_preserved_fraction(&unit_bbox(), &t0, &t0).unwrap(),
            1.0
        );
        assert_eq!(
            compute_preserved_fraction(&unit_bbox(), &t0, &grid(&[0.0; 4])).unwrap(),
            0.0
        );
        assert!(
            (compute_preserved_fraction(&unit_bbox(), &t0, &mixed).unwrap() - 0.75).abs() <= 1e-12
        );
        let left = Parcel::new(0.0, 1.0, 0.0, 0.5).unwrap();
        assert!((compute_preserved_fraction(&left, &t0, &mixed).unwrap() - 0.75).abs() <= 1e-12);
        // Top row only keeps everything.
        let north = Parcel::new(0.5, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(
            compute_preserved_fraction(&north, &t0, &mixed).unwrap(),
            1.0
        );
    }

    #[test]
    fn regrowth_is_unclamped() {
        let t0 = grid(&[0.5, 0.5, 0.5, 0.5]);
        let t1 = grid(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            compute_preserved_fraction(&unit_bbox(), &t0, &t1).unwrap(),
            2.0
        );
    }

    #[test]
    fn preserved_fraction_errors() {
        let t0 = grid(&[1.0; 4]);
        let other = LandCoverGrid::new(unit_bbox(), 1, 4, vec![1.0; 4], SimTime(0)).unwrap();
        assert_eq!(
            compute_preserved_fraction(&unit_bbox(), &t0, &other),
            Err(OracleError::GridMismatch)
        );
        let far = Parcel::new(10.0, 11.0, 10.0, 11.0).unwrap();
        assert_eq!(
            compute_preserved_fraction(&far, &t0, &t0),
            Err(OracleError::NoIntersection)
        );
        let touching = Parcel::new(1.0, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(
            compute_preserved_fraction(&touching, &t0, &t0),
            Err(OracleError::NoIntersection)
        );
        let bare = grid(&[0.0; 4]);
        assert_eq!(
            compute_preserved_fraction(&unit_bbox(), &bare, &t0),
            Err(OracleError::DegenerateParcel)
        );
        assert_eq!(
            GeoRasterOracle::new(t0, other),
            Err(OracleError::GridMismatch)
        );
    }

    #[test]
    fn grid_validation() {
        assert!(LandCoverGrid::new(unit_bbox(), 2, 2, vec![1.0; 3], SimTime(0)).is_err());
        assert!(LandCoverGrid::new(unit_bbox(), 0, 2, vec![], SimTime(0)).is_err());
        assert!(LandCoverGrid::new(unit_bbox(), 1, 1, vec![1.5], SimTime(0)).is_err());
        assert!(LandCoverGrid::new(unit_bbox(), 1, 1, vec![f64::NAN], SimTime(0)).is_err());
        let parsed = LandCoverGrid::from_json_str(
            r#"{"bbox":{"lat_min":0,"lat_max":1,"lon_min":0,"lon_max":1},"rows":2,"cols":2,"cells":[1,1,0.5,0.5],"epoch":365}"#,
        )
        .unwrap();
        assert_eq!(parsed.cell(1, 0), 0.5);
        assert_eq!(parsed.epoch(), SimTime(365));
        assert!(LandCoverGrid::from_json_str(r#"{"rows":1}"#).is_err());
    }

    #[test]
    fn verdict_threshold_is_inclusive() {
        let t0 = grid(&[1.0; 4]);
        let mixed = grid(&[1.0, 1.0, 0.5, 0.5]);
        let v = geo_verdict(&contract(unit_bbox(), 0.95), &t0, &mixed, SimTime(365)).unwrap();
        assert!(!v.verdict);
        let v = geo_verdict(&contract(unit_bbox(), 0.95), &t0, &t0, SimTime(365)).unwrap();
        assert!(v.verdict);
        let v = geo_verdict(&contract(unit_bbox(), 0.75), &t0, &mixed, SimTime(365)).unwrap();
        assert_eq!(v.preserved_fraction, 0.75);
        assert!(v.verdict);
    }

    #[test]
    fn evidence_hash_is_deterministic_and_input_bound() {
        let t0 = grid(&[1.0; 4]);
        let t1 = grid(&[1.0, 1.0, 0.5, 0.5]);
        let a = evidence_hash(&unit_bbox(), &t0, &t1);
        assert_eq!(a, evidence_hash(&unit_bbox(), &t0.clone(), &t1.clone()));
        assert_eq!(a.len(), 64);
        assert_ne!(a, evidence_hash(&unit_bbox(), &t0, &t0));
        let left = Parcel::new(0.0, 1.0, 0.0, 0.5).unwrap();
        assert_ne!(a, evidence_hash(&left, &t0, &t1));
    }

    type Case = (usize, usize, Vec<f64>, Vec<f64>, (f64, f64, f64, f64));

    fn arb_case() -> impl Strategy<Value = Case> {
        (1usize..6, 1usize..6).prop_flat_map(|(rows, cols)| {
            let n = rows * cols;
            (
                Just(rows),
                Just(cols),
                prop::collection::vec(0.05f64..=1.0, n),
                prop::collection::vec(0.0f64..=1.0, n),
                (0.0f64..0.9, 0.05f64..1.0, 0.0f64..0.9, 0.05f64..1.0),
            )
        })
    }

    proptest! {
        #[test]
        fn raising_a_cell_never_lowers_fraction(
            (rows, cols, v0, v1, (a, da, b, db)) in arb_case(),
            pick in any::<prop::sample::Index>(),
            bump in 0.0f64..=1.0,
        ) {
            let bbox = unit_bbox();
            let parcel = Parcel::new(a, (a + da).min(1.0), b, (b + db).min(1.0)).unwrap();
            let t0 = LandCoverGrid::new(bbox, rows, cols, v0, SimTime(0)).unwrap();
            let t1 = LandCoverGrid::new(bbox, rows, cols, v1.clone(), SimTime(365)).unwrap();
            let base = compute_preserved_fraction(&parcel, &t0, &t1).unwrap();
            let mut raised = v1;
            let i = pick.index(raised.len());
            raised[i] = raised[i].max(bump);
            let t1r = LandCoverGrid::new(bbox, rows, cols, raised, SimTime(365)).unwrap();
            prop_assert!(compute_preserved_fraction(&parcel, &t0, &t1r).unwrap() >= base);
        }

        #[test]
        fn identical_snapshots_are_exactly_one((rows, cols, v0, _v1, (a, da, b, db)) in arb_case()) {
            let parcel = Parcel::new(a, (a + da).min(1.0), b, (b + db).min(1.0)).unwrap();
            let t0 = LandCoverGrid::new(unit_bbox(), rows, cols, v0, SimTime(0)).unwrap();
            prop_assert_eq!(compute_preserved_fraction(&parcel, &t0, &t0).unwrap(), 1.0);
        }
    }
}
