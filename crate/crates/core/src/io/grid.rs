use crate::model::{ModelDefinition, GRID_COUPLING, GRID_DEPTH, GRID_UNITS};

/// The 18 grid definitions (`{4,6} x {3,4,5} x {32,48,64}`) sharing the
/// input size and mask scheme of `base`, ordered by coupling, depth, units.
pub fn build_model_grid(base: &ModelDefinition) -> Vec<ModelDefinition> {
    let mut grid = Vec::with_capacity(18);
    for &n_coupling in &GRID_COUPLING {
        for &fc_depth in &GRID_DEPTH {
            for &units in &GRID_UNITS {
                grid.push(ModelDefinition { n_coupling, fc_depth, units, ..*base });
            }
        }
    }
    grid
}

/// Model ids of the grid, in grid order.
pub fn grid_model_ids() -> Vec<String> {
    build_model_grid(&ModelDefinition::new(2, 4, 3, 32)).iter().map(ModelDefinition::model_id).collect()
}
