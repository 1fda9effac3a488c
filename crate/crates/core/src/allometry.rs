//! Tree- and plot-level biomass, and carbon stock of biomass maps.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Grid;
use crate::spatial::Point;

/// Pan-tropical allometry coefficient and exponent (dbh in cm, height in m, wsg in g/cm³, kg out).
pub const ALLOMETRY_COEF: f64 = 0.0673;
pub const ALLOMETRY_EXP: f64 = 0.973;
/// Biomass-to-carbon mass ratio.
pub const CARBON_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    /// Wood specific gravity, g/cm³.
    pub wsg: f64,
    /// Diameter at breast height, cm.
    pub dbh: f64,
    /// Total height, m.
    pub height: f64,
}

impl TreeRecord {
    pub fn new(wsg: f64, dbh: f64, height: f64) -> Result<Self> {
        let t = Self { wsg, dbh, height };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("wsg", self.wsg), ("dbh", self.dbh), ("height", self.height)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidTree(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Aboveground biomass of one tree in kg.
pub fn tree_agb(t: &TreeRecord) -> Result<f64> {
    t.validate()?;
    Ok(ALLOMETRY_COEF * (t.wsg * t.dbh * t.dbh * t.height).powf(ALLOMETRY_EXP))
}

/// Either a measured density or a tree list to aggregate.
#[derive(Debug, Clone, PartialEq)]
pub enum PlotBiomass {
    Trees(Vec<TreeRecord>),
    Density(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRecord {
    pub id: String,
    /// Easting (or longitude in a geographic CRS).
    pub lon: f64,
    /// Northing (or latitude).
    pub lat: f64,
    pub area_ha: f64,
    pub biomass: PlotBiomass,
}

impl PlotRecord {
    pub fn with_density(id: impl Into<String>, x: f64, y: f64, area_ha: f64, agb: f64) -> Self {
        Self { id: id.into(), lon: x, lat: y, area_ha, biomass: PlotBiomass::Density(agb) }
    }

    pub fn location(&self) -> Point {
        Point::new(self.lon, self.lat)
    }
}

/// Plot AGB density in Mg/ha.
pub fn plot_agb_density(p: &PlotRecord) -> Result<f64> {
    if !(p.area_ha.is_finite() && p.area_ha > 0.0) {
        return Err(Error::InvalidPlot(format!("plot `{}`: area_ha must be > 0", p.id)));
    }
    match &p.biomass {
        PlotBiomass::Density(d) if d.is_finite() && *d >= 0.0 => Ok(*d),
        PlotBiomass::Density(d) => Err(Error::InvalidPlot(format!("plot `{}`: agb_mg_ha {d} < 0", p.id))),
        PlotBiomass::Trees(trees) => {
            let mut kg = 0.0;
            for t in trees {
                kg += tree_agb(t).map_err(|e| Error::InvalidPlot(format!("plot `{}`: {e}", p.id)))?;
            }
            Ok(kg / 1000.0 / p.area_ha)
        }
    }
}

/// Per-cell conversion used by [`carbon_stock`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarbonConvention {
    /// AGB × cell area in ha × carbon fraction.
    #[default]
    CellArea,
    /// AGB × 0.01 × carbon fraction, regardless of cell size. Kept for audit
    /// against tables that were produced with this factor.
    LiteralFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarbonStock {
    pub total_tc: f64,
    pub total_ktc: f64,
    pub n_cells: usize,
    pub cell_size_m: f64,
}

const TILE_ROWS: usize = 32;

/// Total carbon stock of an AGB map (Mg/ha, meter cells).
///
/// Cells are summed per fixed tile of rows and tiles are combined in order,
/// so the result does not depend on the worker count.
pub fn carbon_stock(agb_map: &Grid, convention: CarbonConvention) -> Result<CarbonStock> {
    let cs = agb_map.cellsize();
    if !(cs.is_finite() && cs > 0.0) {
        return Err(Error::UnitError(format!("cell size must be a positive length in meters, got {cs}")));
    }
    let factor = match convention {
        CarbonConvention::CellArea => cs * cs / 1.0e4 * CARBON_FRACTION,
        CarbonConvention::LiteralFactor => 0.01 * CARBON_FRACTION,
    };
    let ncols = agb_map.ncols();
    let tiles: Vec<(f64, usize)> = agb_map
        .values()
        .par_chunks(ncols * TILE_ROWS)
        .map(|chunk| {
            chunk
                .iter()
                .filter(|v| !agb_map.is_nodata(**v))
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1))
        })
        .collect();
    let (sum, n_cells) = tiles.iter().fold((0.0, 0usize), |(s, n), (ts, tn)| (s + ts, n + tn));
    let total_tc = sum * factor;
    Ok(CarbonStock { total_tc, total_ktc: total_tc / 1000.0, n_cells, cell_size_m: cs })
}

pub fn write_carbon_csv(path: impl AsRef<Path>, c: &CarbonStock) -> Result<()> {
    write_carbon(std::fs::File::create(path)?, c)
}

/// Single-row carbon table with a header.
pub fn write_carbon(out: impl std::io::Write, c: &CarbonStock) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["total_tC", "total_ktC", "n_cells", "cell_size_m"])?;
    w.write_record([
        c.total_tc.to_string(),
        c.total_ktc.to_string(),
        c.n_cells.to_string(),
        c.cell_size_m.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize, Serialize)]
struct PlotRow {
    plot_id: String,
    lon: f64,
    lat: f64,
    area_ha: f64,
    #[serde(default)]
    agb_mg_ha: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct TreeRow {
    plot_id: String,
    wsg: f64,
    dbh_cm: f64,
    height_m: f64,
}

/// Reads `plot_id,lon,lat,area_ha,agb_mg_ha`. Plots with an empty density get
/// an empty tree list, to be filled by [`attach_trees`].
pub fn read_plots(path: impl AsRef<Path>) -> Result<Vec<PlotRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<PlotRow>() {
        let row = row?;
        out.push(PlotRecord {
            id: row.plot_id,
            lon: row.lon,
            lat: row.lat,
            area_ha: row.area_ha,
            biomass: match row.agb_mg_ha {
                Some(d) => PlotBiomass::Density(d),
                None => PlotBiomass::Trees(Vec::new()),
            },
        });
    }
    Ok(out)
}

/// Reads `plot_id,wsg,dbh_cm,height_m`, grouped by plot.
pub fn read_trees(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<TreeRecord>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: BTreeMap<String, Vec<TreeRecord>> = BTreeMap::new();
    for row in r.deserialize::<TreeRow>() {
        let row = row?;
        let t = TreeRecord::new(row.wsg, row.dbh_cm, row.height_m)?;
        out.entry(row.plot_id).or_default().push(t);
    }
    Ok(out)
}

/// Moves tree lists onto the plots that have no measured density.
pub fn attach_trees(plots: &mut [PlotRecord], mut trees: BTreeMap<String, Vec<TreeRecord>>) {
    for p in plots.iter_mut() {
        if let PlotBiomass::Trees(list) = &mut p.biomass {
            if let Some(ts) = trees.remove(&p.id) {
                *list = ts;
            }
        }
    }
}

/// Writes plots with their resolved densities.
pub fn write_plots(path: impl AsRef<Path>, plots: &[PlotRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in plots {
        w.serialize(PlotRow {
            plot_id: p.id.clone(),
            lon: p.lon,
            lat: p.lat,
            area_ha: p.area_ha,
            agb_mg_ha: Some(plot_agb_density(p)?),
        })?;
    }
    w.flush()?;
    Ok(())
}
