//! Shared fixtures for the criterion benches.

use limitcycle::{CountertermSchedule, MeshSpec, MomentumMesh, PotentialParams};

/// Mesh, parameters and scheduled `h` at cutoff `cutoff` with `Λ* = 1`.
pub struct Fixture {
    pub params: PotentialParams,
    pub mesh: MomentumMesh,
    pub h: f64,
}

impl Fixture {
    pub fn new(nu: f64, cutoff: f64, n_points: usize) -> Self {
        let params = PotentialParams::new(nu).expect("positive nu");
        let mesh = MeshSpec::default()
            .with_points(n_points)
            .build(cutoff, &params)
            .expect("resolvable mesh");
        let h = CountertermSchedule::new(1.0, params)
            .and_then(|s| s.coupling(cutoff))
            .ok()
            .and_then(|c| c.finite())
            .expect("cutoff away from a pole");
        Self { params, mesh, h }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fixture_builds() {
        let f = Fixture::new(1.0, 100.0, 256);
        assert!(f.mesh.len() >= 256);
        assert!(f.h.is_finite());
    }
}
