"""
Influence Abstraction Toolkit - Domain Instances
Common result type of every domain generator
"""

from dataclasses import dataclass, field
from typing import Dict

from ..models.model import DSetSpec, FactoredPOSG, LocalStateFunction, ModelDocument, Policy


@dataclass
class Instance:
    """A generated model together with the protagonist's local view and the others' policies"""
    model: FactoredPOSG
    lsf: LocalStateFunction
    dset: DSetSpec
    policies: Dict[int, Policy] = field(default_factory=dict)
    agent: int = 0

    def document(self) -> ModelDocument:
        return ModelDocument(self.model, dict(self.policies), self.lsf, {self.agent: self.dset}, self.agent)

    def with_dset(self, dset: DSetSpec) -> 'Instance':
        return Instance(self.model, self.lsf, dset, dict(self.policies), self.agent)
