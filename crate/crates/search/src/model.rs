use ispace_core::Candidate;

/// Lower bound and evaluation of candidates.
pub trait CostModel {
    /// Lower bound on the cost of every implementation below `c`.
    fn bound(&self, c: &Candidate) -> u64;
    /// Cost of a fully specified candidate.
    fn evaluate(&self, c: &Candidate) -> Result<u64, String>;
}

/// The GPU simulator and its bound.
#[derive(Clone, Copy, Debug, Default)]
pub struct GpuModel;

impl CostModel for GpuModel {
    fn bound(&self, c: &Candidate) -> u64 {
        ispace_gpu::bound::bound(c)
    }

    fn evaluate(&self, c: &Candidate) -> Result<u64, String> {
        let nest = ispace_gpu::nest::reconstruct(c).map_err(|e| e.to_string())?;
        Ok(ispace_gpu::cost::evaluate(&nest).total)
    }
}

/// No pruning information: every bound is zero and every implementation
/// costs the same.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlatModel;

impl CostModel for FlatModel {
    fn bound(&self, _: &Candidate) -> u64 {
        0
    }

    fn evaluate(&self, _: &Candidate) -> Result<u64, String> {
        Ok(0)
    }
}
