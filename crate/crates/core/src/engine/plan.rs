use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::exec::Graph;
use super::{DatasetId, EngineError, StageId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageBoundary {
    /// Ends by writing shuffle output for this wide dataset.
    Shuffle(DatasetId),
    /// Ends in the action on the target dataset.
    Action,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub id: StageId,
    /// Datasets computed by the stage's tasks, parents before children. A
    /// wide dataset only appears first in a pipeline, as the shuffle reader.
    pub pipeline: Vec<DatasetId>,
    pub parents: Vec<StageId>,
    pub boundary: StageBoundary,
}

pub(crate) fn build(g: &Graph, root: DatasetId) -> Result<Vec<Stage>, EngineError> {
    let mut b = Builder {
        g,
        stages: Vec::new(),
        by_wide: BTreeMap::new(),
    };
    let (pipeline, parents) = b.pipeline(&[root])?;
    let id = StageId(b.stages.len() as u32);
    b.stages.push(Stage {
        id,
        pipeline,
        parents,
        boundary: StageBoundary::Action,
    });
    Ok(b.stages)
}

struct Builder<'g> {
    g: &'g Graph,
    stages: Vec<Stage>,
    by_wide: BTreeMap<DatasetId, StageId>,
}

impl Builder<'_> {
    /// Collects the narrow closure above `tops`, stopping at wide datasets,
    /// whose map stages become parents.
    fn pipeline(
        &mut self,
        tops: &[DatasetId],
    ) -> Result<(Vec<DatasetId>, Vec<StageId>), EngineError> {
        let mut seen = BTreeSet::new();
        let mut parents = BTreeSet::new();
        let mut stack: Vec<DatasetId> = tops.to_vec();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            let node = self.g.node(id)?;
            if node.is_wide() {
                parents.insert(self.map_stage(id)?);
            } else {
                stack.extend(node.parents().iter().copied());
            }
        }
        Ok((seen.into_iter().collect(), parents.into_iter().collect()))
    }

    fn map_stage(&mut self, wide: DatasetId) -> Result<StageId, EngineError> {
        if let Some(id) = self.by_wide.get(&wide) {
            return Ok(*id);
        }
        let tops = self.g.node(wide)?.parents().to_vec();
        let (pipeline, parents) = self.pipeline(&tops)?;
        let id = StageId(self.stages.len() as u32);
        self.stages.push(Stage {
            id,
            pipeline,
            parents,
            boundary: StageBoundary::Shuffle(wide),
        });
        self.by_wide.insert(wide, id);
        Ok(id)
    }
}
