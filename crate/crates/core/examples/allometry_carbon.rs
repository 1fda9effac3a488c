//! Tree biomass, plot biomass density and the carbon stock of a small map.
//!
//! cargo run --release --example allometry_carbon

use agbmap::allometry::{carbon_stock, plot_agb_density, tree_agb, CarbonConvention, PlotBiomass, PlotRecord, TreeRecord};
use agbmap::raster::Grid;

fn main() -> agbmap::Result<()> {
    let trees = vec![
        TreeRecord::new(0.6, 30.0, 30.0)?,
        TreeRecord::new(0.72, 55.0, 38.0)?,
        TreeRecord::new(0.45, 12.0, 14.0)?,
    ];
    for t in &trees {
        println!("wsg {:.2} dbh {:>4.0} cm h {:>4.0} m -> {:>8.1} kg", t.wsg, t.dbh, t.height, tree_agb(t)?);
    }

    // A 0.01 ha subplot holding the three trees.
    let plot = PlotRecord { id: "p1".into(), lon: 0.0, lat: 0.0, area_ha: 0.01, biomass: PlotBiomass::Trees(trees) };
    println!("plot density: {:.1} Mg/ha", plot_agb_density(&plot)?);

    // 3 x 3 km map at 1 km cells, 400 Mg/ha everywhere except one nodata cell.
    let mut vals = vec![400.0; 9];
    vals[4] = -9999.0;
    let map = Grid::from_values(3, 3, 0.0, 0.0, 1000.0, -9999.0, vals)?;
    for conv in [CarbonConvention::CellArea, CarbonConvention::LiteralFactor] {
        let c = carbon_stock(&map, conv)?;
        println!("{conv:?}: {:.0} t C ({:.1} kt C) over {} cells", c.total_tc, c.total_ktc, c.n_cells);
    }
    Ok(())
}
