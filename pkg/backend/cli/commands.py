#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Subcommands
One handler per subcommand; each returns a report and an exit code
"""

import logging
from typing import Callable, Dict, List, NamedTuple, Optional

from ..domains import (
    ChainParams,
    HouseSearchParams,
    Instance,
    PlanetaryParams,
    RandomParams,
    gen_chain,
    gen_housesearch,
    gen_planetary,
    gen_random,
)
from ..models.dbn import (
    Node,
    check_policies,
    dset_nodes,
    dsep_verdict,
    influence_source_nodes,
    local_history_nodes,
    query,
    unroll,
)
from ..models.gfbrm import build_gfbrm
from ..models.ialm import build_ialm
from ..models.influence import factorization_check, influence_for
from ..models.model import (
    FULL_HISTORY,
    DSetSpec,
    LocalStateFunction,
    Tracked,
    classify_factors,
    proxy_rewrite,
    validate_lfm,
    validate_model,
    validate_policy,
)
from ..models.solver import solve
from ..models.verify import check_theorem, model_statistics
from ..utils.export_manager import ExportManager, Report
from ..utils.model_io import dumps_document, load_document, save_document

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_CAP = 3

DOMAINS = ('housesearch', 'housesearch-isd', 'planetary', 'chain', 'chain-correlated', 'random')


class Outcome(NamedTuple):
    report: Optional[Report]
    code: int
    text: Optional[str] = None


COMMANDS: Dict[str, Callable] = {}


def command(name: str):
    """Decorator registering a subcommand handler"""
    def register(fn):
        COMMANDS[name] = fn
        return fn
    return register


# ----------------------------------------------------------------------------
# Instance resolution
# ----------------------------------------------------------------------------

def generate(domain: str, horizon: Optional[int] = None, seed: int = 0) -> Instance:
    """Build a built-in domain, optionally with a horizon override"""
    extra = {} if horizon is None else {'horizon': horizon}
    if domain == 'housesearch':
        return gen_housesearch(HouseSearchParams(**extra), isd=False)
    if domain == 'housesearch-isd':
        return gen_housesearch(HouseSearchParams(**extra), isd=True)
    if domain == 'planetary':
        return gen_planetary(PlanetaryParams(**extra))
    if domain in ('chain', 'chain-correlated'):
        return gen_chain('correlated' if domain == 'chain-correlated' else 'plain', ChainParams(**extra))
    if domain == 'random':
        return gen_random(RandomParams(**extra), seed=seed)
    raise ValueError(f"unknown domain {domain!r}; choose from {', '.join(DOMAINS)}")


def resolve_instance(args, strict: bool = True) -> Instance:
    """
    The protagonist's view of the model named by --model or --domain.

    Missing local-state functions default to everything modeled; missing d-sets to the full
    history of every modeled factor plus the own actions. With strict set, structural defects raise
    ModelValidationError.
    """
    if getattr(args, 'model', None):
        doc = load_document(args.model)
        model = doc.model
        if strict:
            validate_model(model).raise_if_invalid()
        agent = args.agent if args.agent is not None else (doc.protagonist or 0)
        if not 0 <= agent < model.n_agents:
            raise ValueError(f"agent index {agent} out of range for {model.n_agents} agents")
        lsf = doc.lsf or LocalStateFunction.full(model)
        dset = doc.dsets.get(agent) or DSetSpec.full_history(sorted(lsf.of(agent)), own_action=True)
        instance = Instance(model, lsf, dset, doc.others_policies(agent), agent)
    elif getattr(args, 'domain', None):
        instance = generate(args.domain, args.horizon, args.seed)
        if args.agent is not None and args.agent != instance.agent:
            raise ValueError(f"built-in domain {args.domain} fixes the protagonist to agent {instance.agent}")
    else:
        raise ValueError("either --model or --domain is required")
    if getattr(args, 'proxy', False):
        instance = with_proxies(instance)
    if args.horizon is not None and instance.model.horizon != args.horizon:
        instance = Instance(instance.model.with_horizon(args.horizon), instance.lsf, instance.dset,
                            instance.policies, instance.agent)
    return instance


def with_proxies(instance: Instance) -> Instance:
    """Apply proxy_rewrite for the protagonist; new proxies join the d-set with full histories"""
    model, lsf = proxy_rewrite(instance.model, instance.lsf, instance.agent)
    if model is instance.model:
        return instance
    added = sorted(set(lsf.of(instance.agent)) - set(instance.lsf.of(instance.agent)))
    dset = DSetSpec(instance.dset.tracked + tuple(Tracked(fid, FULL_HISTORY) for fid in added))
    logger.info("proxies %s added for agent %d", [model.factors[fid].name for fid in added], instance.agent)
    return Instance(model, lsf, dset, instance.policies, instance.agent)


def settings(args) -> Dict[str, object]:
    values = {
        'tol': args.tol,
        'exact_tol': args.exact_tol,
        'tie_tol': args.tie_tol,
        'cap_aohs': args.cap_aohs,
        'cap_trajs': args.cap_trajs,
        'force': args.force,
        'proxy': getattr(args, 'proxy', False),
        'jobs': args.jobs,
    }
    return ExportManager.settings_of(values)


def _history_text(history) -> str:
    return ','.join(str(v) for v in history)


# ----------------------------------------------------------------------------
# Handlers
# ----------------------------------------------------------------------------

@command('validate')
def run_validate(args) -> Outcome:
    """Structural checks of the model, the policies, the local form and policy coverage"""
    inst = resolve_instance(args, strict=False)
    m = inst.model
    report = validate_model(m)
    for j, policy in sorted(inst.policies.items()):
        report.extend(validate_policy(m, j, policy))
    if report.ok:
        report.extend(validate_lfm(m, inst.lsf, inst.agent))
        missing = [j for j in range(m.n_agents) if j != inst.agent and j not in inst.policies]
        for j in missing:
            report.add(f"no policy for agent {m.agents[j].name}")
        if not missing:
            report.extend(check_policies(unroll(m, inst.policies, inst.agent,
                                                cap_trajectories=args.cap_trajs)))
    out = Report('validate', settings=settings(args))
    out.summary.update({'model': m.name, 'agent': m.agents[inst.agent].name, 'valid': report.ok,
                        'violations': len(report.violations)})
    out.add_table('violations', ExportManager.frame(([v] for v in report.violations), ['violation']))
    return Outcome(out, EXIT_OK if report.ok else EXIT_FAILED)


@command('gen')
def run_gen(args) -> Outcome:
    """Write a built-in domain as a model document"""
    if not args.domain:
        raise ValueError("gen needs --domain")
    doc = generate(args.domain, args.horizon, args.seed).document()
    if args.out:
        save_document(doc, args.out)
        out = Report('gen', summary={'domain': args.domain, 'out': args.out})
        return Outcome(out, EXIT_OK)
    return Outcome(None, EXIT_OK, dumps_document(doc))


def _influence_point(inst: Instance, args):
    return influence_for(inst.model, inst.lsf, inst.agent, inst.policies, inst.dset, tol=args.tol,
                         force=args.force, cap_trajectories=args.cap_trajs)


@command('solve')
def run_solve(args) -> Outcome:
    """V(b0) and per-stage branching of the chosen best-response model(s)"""
    inst = resolve_instance(args)
    m, i = inst.model, inst.agent
    models = {}
    if args.which in ('gfbrm', 'both'):
        models['gfbrm'] = build_gfbrm(m, inst.policies, i)
    if args.which in ('ialm', 'both'):
        models['ialm'] = build_ialm(m, inst.lsf, i, _influence_point(inst, args), inst.dset, tol=args.tol)

    out = Report('solve', settings=settings(args))
    out.summary.update({'model': m.name, 'agent': m.agents[i].name, 'horizon': m.horizon})
    counts, tree_rows = [], []
    for name, pomdp in models.items():
        tree = solve(pomdp, args.cap_aohs, args.tie_tol)
        out.summary[f'value_{name}'] = tree.value
        counts += [[name, stage, n] for stage, n in tree.stage_counts().items()]
        if args.tree:
            for history in sorted(tree.nodes, key=lambda h: (len(h), h)):
                node = tree.nodes[history]
                tree_rows.append([name, _history_text(history), node.stage, node.value,
                                  '' if node.best_action is None else node.best_action,
                                  ' '.join(f'{q:.12g}' for q in node.q_values)])
    if len(models) == 2:
        out.summary['value_delta'] = abs(out.summary['value_gfbrm'] - out.summary['value_ialm'])
    out.add_table('branching', ExportManager.frame(counts, ['model', 'stage', 'histories']))
    if args.tree:
        out.add_table('value_tree', ExportManager.frame(
            tree_rows, ['model', 'aoh', 'stage', 'value', 'best_action', 'q_values']))
    return Outcome(out, EXIT_OK)


@command('influence')
def run_influence(args) -> Outcome:
    """Dump the influence point: stage, d-set value, source value, probability"""
    inst = resolve_instance(args)
    ip = _influence_point(inst, args)
    rows = []
    for stage in sorted(ip.tables):
        if args.stage is not None and stage != args.stage:
            continue
        for key in sorted(ip.tables[stage], key=repr):
            row = ip.tables[stage][key]
            extras = (_history_text(key.x_prev), '' if key.own_action is None else key.own_action,
                      _history_text(key.x_next))
            for source in sorted(row):
                rows.append([stage, repr(key.dval.values), *extras, _history_text(source), row[source], 1])
    gaps = [[stage, gap] for stage, gap in sorted(ip.gaps.items())]

    out = Report('influence', settings=settings(args))
    out.summary.update({'model': inst.model.name, 'agent': inst.model.agents[inst.agent].name,
                        'intra_stage': ip.isd, 'forced': ip.forced, 'max_gap': ip.max_gap,
                        'factorized': factorization_check(ip, tol=args.exact_tol)})
    out.add_table('influence', ExportManager.frame(
        rows, ['stage', 'dset_value', 'x_prev', 'own_action', 'x_next', 'sources', 'probability', 'reachable']))
    out.add_table('separation', ExportManager.frame(gaps, ['stage', 'gap']))
    return Outcome(out, EXIT_OK)


@command('verify')
def run_verify(args) -> Outcome:
    """Value equivalence and every lemma at every reachable history; exit 1 on failure"""
    inst = resolve_instance(args)
    result = check_theorem(inst.model, inst.lsf, inst.agent, inst.policies, inst.dset, tol=args.tol,
                           force=args.force, jobs=args.jobs, cap_aohs=args.cap_aohs,
                           cap_trajectories=args.cap_trajs)
    first = result.first_failing_stage()
    out = Report('verify', settings=settings(args))
    out.summary.update({
        'model': inst.model.name,
        'agent': inst.model.agents[inst.agent].name,
        'passed': result.passed,
        'value_gfbrm': result.value_global,
        'value_ialm': result.value_local,
        'value_delta': result.value_delta,
        'max_lemma1': result.max_delta('lemma1'),
        'max_lemma2': result.max_delta('lemma2'),
        'max_lemma3': result.max_delta('lemma3'),
        'max_lemma4': result.max_delta('lemma4'),
        'max_belief_gap': result.max_delta('belief_gap'),
        'first_failing_stage': '' if first is None else first,
        'unmatched_histories': len(result.unmatched_histories),
        'unreachable_lookups': result.unreachable_lookups,
    })
    out.add_table('stages', ExportManager.frame(
        ([s.stage, s.histories, s.lemma1, s.lemma2, s.lemma3, s.lemma4, s.q_delta, s.belief_gap]
         for s in result.stages),
        ['stage', 'histories', 'lemma1', 'lemma2', 'lemma3', 'lemma4', 'q_delta', 'belief_gap']))
    out.add_table('separation', ExportManager.frame(sorted(result.separation_gaps.items()), ['stage', 'gap']))
    return Outcome(out, EXIT_OK if result.passed else EXIT_FAILED)


@command('stats')
def run_stats(args) -> Outcome:
    """Per-stage reachable sizes of the global and the local best-response models"""
    inst = resolve_instance(args)
    m, i = inst.model, inst.agent
    gfbrm = build_gfbrm(m, inst.policies, i)
    ialm = build_ialm(m, inst.lsf, i, _influence_point(inst, args), inst.dset, tol=args.tol)
    rows = model_statistics(gfbrm, ialm, args.cap_aohs)
    out = Report('stats', settings=settings(args))
    out.summary.update({'model': m.name, 'agent': m.agents[i].name, 'horizon': m.horizon,
                        'gfbrm_support_total': sum(r.gfbrm_support for r in rows),
                        'ialm_support_total': sum(r.ialm_support for r in rows)})
    out.add_table('stages', ExportManager.frame(
        ([r.stage, r.gfbrm_histories, r.ialm_histories, r.gfbrm_support, r.ialm_support,
          r.gfbrm_states, r.ialm_states] for r in rows),
        ['stage', 'gfbrm_histories', 'ialm_histories', 'gfbrm_support', 'ialm_support',
         'gfbrm_states', 'ialm_states']))
    return Outcome(out, EXIT_OK)


@command('dsep')
def run_dsep(args) -> Outcome:
    """Graph and numeric d-separation verdict of the d-set at each stage"""
    inst = resolve_instance(args)
    m, i = inst.model, inst.agent
    links = classify_factors(m, inst.lsf, i)
    net = unroll(m, inst.policies, i, cap_trajectories=args.cap_trajs)
    rows = []
    for t in range(m.horizon):
        stage = t + 1
        if args.stage is not None and stage != args.stage:
            continue
        sources = influence_source_nodes(m, links, t)
        shield = [n for group in dset_nodes(inst.dset, i, stage) for n in group]
        rest = local_history_nodes(m, i, inst.lsf.of(i), t)
        verdict = dsep_verdict(net, sources, shield, rest, args.tol)
        rows.append([stage, verdict.separated, verdict.max_violation, verdict.graph_separated, verdict.note])
    separated = all(r[1] for r in rows)
    out = Report('dsep', settings=settings(args))
    out.summary.update({'model': m.name, 'agent': m.agents[i].name, 'separated': separated})
    out.add_table('stages', ExportManager.frame(rows, ['stage', 'separated', 'max_violation',
                                                       'graph_separated', 'note']))
    return Outcome(out, EXIT_OK if separated else EXIT_FAILED)


def parse_node(text: str, model) -> Node:
    """
    Parse x:<factor>:<t>, a:<agent>:<t> or o:<agent>:<t>; names or indices are accepted.

    Raises:
        ValueError: malformed node text
    """
    parts = text.strip().split(':')
    if len(parts) != 3 or parts[0] not in ('x', 'a', 'o'):
        raise ValueError(f"malformed node {text!r}; expected x:<factor>:<t>, a:<agent>:<t> or o:<agent>:<t>")
    kind, name, stage = parts
    try:
        t = int(stage)
    except ValueError:
        raise ValueError(f"node {text!r}: stage must be an integer")
    if name.isdigit():
        index = int(name)
    else:
        try:
            index = model.factor_id(name) if kind == 'x' else model.agent_id(name)
        except KeyError as exc:
            raise ValueError(f"node {text!r}: {exc.args[0]}")
    limit = len(model.factors) if kind == 'x' else model.n_agents
    if not 0 <= index < limit or t < 0:
        raise ValueError(f"node {text!r} out of range")
    return Node(kind, index, t)


def parse_evidence(items: List[str], model) -> Dict[Node, int]:
    evidence = {}
    for item in items or []:
        node_text, sep, value = item.partition('=')
        if not sep:
            raise ValueError(f"evidence {item!r} must read <node>=<value>")
        try:
            evidence[parse_node(node_text, model)] = int(value)
        except ValueError as exc:
            raise ValueError(f"evidence {item!r}: {exc}")
    return evidence


@command('query')
def run_query(args) -> Outcome:
    """Exact P(targets | evidence) on the unrolled network"""
    inst = resolve_instance(args)
    m = inst.model
    if not args.target:
        raise ValueError("query needs at least one --target")
    targets = [parse_node(t, m) for t in args.target]
    for node in targets:
        if node.stage > m.horizon:
            raise ValueError(f"target {node.label(m)} lies beyond the horizon {m.horizon}")
    evidence = parse_evidence(args.evidence, m)
    result = query(unroll(m, inst.policies, inst.agent, cap_trajectories=args.cap_trajs), targets, evidence)
    labels = [n.label(m) for n in targets]
    rows = [[*values, p] for values, p in sorted(result.items())]
    out = Report('query', settings=settings(args))
    out.summary.update({'model': m.name, 'targets': ' '.join(labels),
                        'evidence': ' '.join(f'{n.label(m)}={v}' for n, v in sorted(evidence.items()))})
    out.add_table('distribution', ExportManager.frame(rows, labels + ['probability']))
    return Outcome(out, EXIT_OK)

