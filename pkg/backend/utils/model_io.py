#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Model Documents
Reading and writing the JSON model format described in docs/MODEL_FORMAT.md
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from ..models.builder import ModelBuilder, format_parent
from ..models.errors import ModelFormatError
from ..models.model import (
    EXPLICIT,
    OWN_ACTION,
    REACTIVE,
    RETENTIONS,
    DSetSpec,
    FactoredPOSG,
    LocalStateFunction,
    ModelDocument,
    Policy,
    Tracked,
)

logger = logging.getLogger(__name__)

FORMAT_NAME = 'influence-model'
FORMAT_VERSION = 1
OWN_ACTION_TAG = 'own-action'


# ----------------------------------------------------------------------------
# Encoding
# ----------------------------------------------------------------------------

def _history_key(key) -> str:
    if key is None:
        return ''
    if isinstance(key, tuple):
        return ','.join(str(v) for v in key)
    return str(key)


def _table(source: Any, attribute: str = 'table') -> List[float]:
    return [float(v) for v in getattr(source, attribute)]


def _policy_to_dict(policy: Policy) -> Dict[str, Any]:
    rows = {_history_key(k): list(v) for k, v in sorted(policy.table.items(), key=lambda kv: _sort_key(kv[0]))}
    return {
        'kind': 'explicit' if policy.kind == EXPLICIT else 'reactive',
        'n_actions': policy.n_actions,
        'rows': rows,
        'default': list(policy.default) if policy.default is not None else None,
    }


def _sort_key(key):
    if key is None:
        return (0, ())
    if isinstance(key, tuple):
        return (len(key), key)
    return (1, (key,))


def document_to_dict(doc: ModelDocument) -> Dict[str, Any]:
    """Plain-data view of a model document with a fixed key order"""
    m = doc.model
    agent_name = {j: a.name for j, a in enumerate(m.agents)}
    data: Dict[str, Any] = {
        'format': FORMAT_NAME,
        'version': FORMAT_VERSION,
        'name': m.name,
        'horizon': m.horizon,
        'gamma': m.gamma,
        'factors': [{'name': f.name, 'size': f.domain_size} for f in m.factors],
        'agents': [{'name': a.name, 'actions': list(a.actions), 'observations': list(a.observations)}
                   for a in m.agents],
        'cpts': [{'child': cpt.child, 'parents': [format_parent(r, m) for r in cpt.parents], 'table': _table(cpt)}
                 for cpt in m.dbn.factor_cpts],
        'observations': [{'agent': agent_name[j], 'parents': [format_parent(r, m) for r in cpt.parents],
                          'table': _table(cpt)} for j, cpt in enumerate(m.dbn.observation_cpts)],
        'rewards': [{'agent': agent_name[r.agent], 'parents': [format_parent(p, m) for p in r.parents],
                     'table': _table(r, 'values')} for r in m.rewards],
        'initial_bn': [{'child': cpt.child, 'parents': [format_parent(r, m) for r in cpt.parents],
                        'table': _table(cpt)} for cpt in m.initial_bn],
        'policies': {agent_name[j]: _policy_to_dict(p) for j, p in sorted(doc.policies.items())},
        'lsf': ({agent_name[j]: sorted(m.factors[f].name for f in doc.lsf.of(j))
                 for j in sorted(doc.lsf.modeled)} if doc.lsf is not None else {}),
        'dset': {agent_name[j]: [{'variable': OWN_ACTION_TAG if t.is_own_action else m.factors[t.variable].name,
                                  'retention': t.retention} for t in spec.tracked]
                 for j, spec in sorted(doc.dsets.items())},
        'protagonist': agent_name[doc.protagonist] if doc.protagonist is not None else None,
    }
    return data


def dumps_document(doc: ModelDocument) -> str:
    return json.dumps(document_to_dict(doc), indent=2) + '\n'


def save_document(doc: ModelDocument, path: Union[str, Path]):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_document(doc), encoding='utf-8')
    logger.info("model document written to %s", path)


# ----------------------------------------------------------------------------
# Decoding
# ----------------------------------------------------------------------------

def _require(data: Mapping, key: str, kind=None):
    if not isinstance(data, Mapping):
        raise ModelFormatError(f"expected an object holding {key!r}, got {data!r}")
    if key not in data:
        raise ModelFormatError(f"missing field {key!r}")
    value = data[key]
    if kind is not None and not isinstance(value, kind):
        raise ModelFormatError(f"field {key!r} must be of type {kind.__name__ if isinstance(kind, type) else kind}")
    return value


def _parse_key(text: str, kind: str):
    if not isinstance(text, str):
        raise ModelFormatError(f"policy key {text!r} must be a string")
    if text == '':
        return () if kind == EXPLICIT else None
    try:
        values = tuple(int(v) for v in text.split(','))
    except ValueError:
        raise ModelFormatError(f"policy key {text!r} is not a comma-separated index list")
    if kind == EXPLICIT:
        return values
    if len(values) != 1:
        raise ModelFormatError(f"reactive policy key {text!r} must be a single observation")
    return values[0]


def _policy_from_dict(data: Mapping) -> Policy:
    kind_tag = _require(data, 'kind', str)
    if kind_tag not in ('explicit', 'reactive'):
        raise ModelFormatError(f"unknown policy kind {kind_tag!r}")
    kind = EXPLICIT if kind_tag == 'explicit' else REACTIVE
    rows = _require(data, 'rows', dict)
    table = {_parse_key(k, kind): tuple(float(p) for p in v) for k, v in rows.items()}
    default = data.get('default')
    return Policy(kind, table, int(_require(data, 'n_actions', int)),
                  tuple(float(p) for p in default) if default is not None else None)


def _tables(builder: ModelBuilder, entries, method, owner_field: str):
    for entry in entries:
        if not isinstance(entry, dict):
            raise ModelFormatError(f"table entries must be objects, got {entry!r}")
        owner = _require(entry, owner_field, str)
        parents = _require(entry, 'parents', list)
        if not all(isinstance(p, str) for p in parents):
            raise ModelFormatError(f"parents of {owner!r} must be strings")
        table = _require(entry, 'table', list)
        try:
            values = [float(v) for v in table]
        except (TypeError, ValueError):
            raise ModelFormatError(f"table of {owner!r} holds non-numeric entries")
        method(owner, parents, table=values)


def document_from_dict(data: Mapping) -> ModelDocument:
    """
    Rebuild a model document from plain data.

    Raises:
        ModelFormatError: missing fields, unknown names or wrong types
    """
    if not isinstance(data, dict):
        raise ModelFormatError("model document must be a JSON object")
    if data.get('format', FORMAT_NAME) != FORMAT_NAME:
        raise ModelFormatError(f"unsupported format {data.get('format')!r}")
    if int(data.get('version', FORMAT_VERSION)) > FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {data.get('version')!r}")

    builder = ModelBuilder(str(data.get('name', 'model')))
    for factor in _require(data, 'factors', list):
        builder.factor(_require(factor, 'name', str), _require(factor, 'size', int))
    for agent in _require(data, 'agents', list):
        builder.agent(_require(agent, 'name', str), _require(agent, 'actions', list),
                      _require(agent, 'observations', list))

    _tables(builder, _require(data, 'cpts', list), builder.cpt, 'child')
    _tables(builder, _require(data, 'observations', list), builder.observation, 'agent')
    _tables(builder, data.get('rewards', []), builder.reward, 'agent')
    _tables(builder, _require(data, 'initial_bn', list), builder.initial, 'child')

    horizon = _require(data, 'horizon', int)
    gamma = data.get('gamma', 1.0)
    if not isinstance(gamma, (int, float)):
        raise ModelFormatError("field 'gamma' must be a number")
    model = builder.build(horizon, float(gamma))

    def agent_index(name: str) -> int:
        if name not in builder.agent_ids:
            raise ModelFormatError(f"unknown agent {name!r}")
        return builder.agent_ids[name]

    def factor_index(name: str) -> int:
        if name not in builder.factor_ids:
            raise ModelFormatError(f"unknown factor {name!r}")
        return builder.factor_ids[name]

    policies = {agent_index(name): _policy_from_dict(p) for name, p in data.get('policies', {}).items()}

    lsf: Optional[LocalStateFunction] = None
    if data.get('lsf'):
        lsf = LocalStateFunction({agent_index(name): frozenset(factor_index(f) for f in factors)
                                  for name, factors in data['lsf'].items()})

    dsets = {}
    for name, tracked in data.get('dset', {}).items():
        entries = []
        for item in tracked:
            retention = _require(item, 'retention', str)
            if retention not in RETENTIONS:
                raise ModelFormatError(f"unknown retention {retention!r}")
            variable = _require(item, 'variable', str)
            if (variable == OWN_ACTION_TAG) != (retention == OWN_ACTION):
                raise ModelFormatError(f"retention {retention!r} does not fit variable {variable!r}")
            entries.append(Tracked(None if variable == OWN_ACTION_TAG else factor_index(variable), retention))
        dsets[agent_index(name)] = DSetSpec(tuple(entries))

    protagonist = data.get('protagonist')
    return ModelDocument(model, policies, lsf, dsets,
                         agent_index(protagonist) if protagonist is not None else None)


def loads_document(text: str) -> ModelDocument:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON: {exc}")
    return document_from_dict(data)


def load_document(path: Union[str, Path]) -> ModelDocument:
    """
    Load a model document from disk.

    Raises:
        ModelFormatError: unreadable file or malformed document
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ModelFormatError(f"cannot read {path}: {exc}")
    doc = loads_document(text)
    logger.info("loaded model %s (%d factors, %d agents)", doc.model.name, len(doc.model.factors),
                doc.model.n_agents)
    return doc


def load_model(path: Union[str, Path]) -> FactoredPOSG:
    return load_document(path).model
