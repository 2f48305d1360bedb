#!/usr/bin/env python3

"""
Command line front end. main(argv) returns the process exit code.
"""

import argparse
import csv
import functools
import io
import itertools
import json
import logging
import math
import sys
from dataclasses import dataclass
from multiprocessing import Pool
from typing import List, Tuple

import baselines
import counterfactual
import estimation
import variational
from errors import (EXIT_OK, EXIT_SEMANTIC, BindingError, OracleMismatch, QueryError, VceError, exit_code)
from expression import format_number
from probengine import build_joint
from semdsl import load_model, parse_number, serialize_model
from semmodel import CPT, Partition, Root, bind, validate

logger = logging.getLogger(__name__)

MULTI_PROCESSING = True
CHECK_TOLERANCE = 1e-9
CHECK_DEGREES = (0.0, 0.3, 1.0, 2.0)


def number(text):
    try:
        return parse_number(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def binding(text):
    if '=' not in text:
        raise argparse.ArgumentTypeError('expected NAME=VALUE, got {!r}'.format(text))
    name, value = text.split('=', 1)
    return name.strip(), number(value)


def name_list(text):
    return [n.strip() for n in text.split(',') if n.strip()]


# Model preparation


def prepare_model(model, outcome=None, bindings=None, noise_param=None):
    """
    Bind the declared parameters; turn a table outcome into a function of
    its parents and a noise variable, then bind the noise parameter if one
    was requested.
    """
    bindings = dict(bindings or {})
    declared = {p.name for p in model.parameters}
    model = bind(model, {k: v for k, v in bindings.items() if k in declared})
    rest = {k: v for k, v in bindings.items() if k not in declared}

    if outcome is not None and isinstance(model.mechanism(outcome), (Root, CPT)):
        model = variational.cpt_to_noise(model, outcome, free_parameter=noise_param)
        if noise_param is not None:
            if noise_param not in rest:
                raise BindingError("unbound parameter '{}'".format(noise_param))
            model = bind(model, {noise_param: rest.pop(noise_param)})
    if rest:
        raise BindingError("unknown parameter '{}'".format(sorted(rest)[0]))
    return model


def _query(options, degree=None):
    return variational.EffectQuery(options.cause, options.outcome,
                                   options.degree if degree is None else degree, options.variant, options.sign)


def _load(options, outcome=None):
    model = load_model(options.model)
    return prepare_model(model, outcome, dict(options.param), getattr(options, 'noise_param', None))


# eval


def render_report(report, support=None):
    lines = ['{} = {:.12g}'.format(report.query.describe(), report.value)]
    if report.breakdown and (len(report.breakdown) > 1 or report.breakdown[0].z):
        lines.append('  {:<30} {:>14} {:>16}  {}'.format('z', 'P(z)', 'value', 'witness'))
    for entry in report.breakdown:
        if not entry.z and len(report.breakdown) == 1:
            if entry.witness is not None:
                lines.append('  witness ({})'.format(', '.join(format_number(v) for v in entry.witness)))
            continue
        z = ', '.join('{}={}'.format(k, format_number(v)) for k, v in entry.z.items())
        witness = '({})'.format(', '.join(format_number(v) for v in entry.witness)) if entry.witness else '-'
        lines.append('  {:<30} {:>14.8g} {:>16.12g}  {}'.format(z, entry.probability, entry.value, witness))
    return '\n'.join(lines)


def cmd_eval(options):
    model = _load(options, options.outcome)
    restrict = [parse_number(v) for v in name_list(options.restrict)] if options.restrict else None
    report = variational.effect(model, _query(options), restrict=restrict)
    if options.format == 'json':
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(render_report(report))
    return EXIT_OK


# sweep


@dataclass
class SweepSpec:
    axes: List[Tuple[str, List[float]]]

    @classmethod
    def parse(cls, texts):
        axes = []
        for text in texts:
            if '=' not in text or text.count(':') != 2:
                raise QueryError('axis must look like name=start:stop:step, got {!r}'.format(text))
            name, bounds = text.split('=', 1)
            try:
                start, stop, step = (parse_number(v) for v in bounds.split(':'))
            except ValueError as e:
                raise QueryError(str(e)) from None
            if step <= 0:
                raise QueryError("axis '{}' needs a positive step".format(name))
            if start > stop:
                raise QueryError("axis '{}' starts after it stops".format(name))
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            axes.append((name.strip(), [round(start + i * step, 12) for i in range(count)]))
        if len({name for name, _ in axes}) != len(axes):
            raise QueryError('repeated sweep axis')
        return cls(axes)

    @property
    def names(self):
        return [name for name, _ in self.axes]

    def points(self):
        return list(itertools.product(*(values for _, values in self.axes)))


def sweep_point(options, model, *values):
    bindings = dict(options['bindings'])
    degree = options['degree']
    for name, value in zip(options['axes'], values):
        if name == 'd':
            degree = value
        else:
            bindings[name] = value
    try:
        prepared = prepare_model(model, options['outcome'], bindings, options['noise_param'])
        query = variational.EffectQuery(options['cause'], options['outcome'], degree, options['variant'],
                                        options['sign'])
        return variational.effect(prepared, query).value
    except VceError as e:
        logger.warning('sweep point (%s) failed: %s', ', '.join(format_number(v) for v in values), e)
        return float('nan')


class Sweeper:
    def __init__(self, cause, outcome, degree=1.0, variant='pace', sign='abs', bindings=None, noise_param=None):
        self.options = {
            'cause': cause,
            'outcome': outcome,
            'degree': degree,
            'variant': variant,
            'sign': sign,
            'bindings': dict(bindings or {}),
            'noise_param': noise_param,
            'axes': [],
        }

    def run(self, model, spec, multi_processing=MULTI_PROCESSING):
        self.options['axes'] = spec.names
        declared = {p.name for p in model.parameters} | {self.options['noise_param'], 'd'}
        for name in spec.names:
            if name not in declared:
                raise QueryError("sweep axis '{}' is neither a parameter nor d".format(name))

        points = spec.points()
        logger.info('sweeping %d points over %s', len(points), ', '.join(spec.names))
        worker = functools.partial(sweep_point, self.options, model)
        if multi_processing:
            with Pool() as pool:
                values = pool.starmap(worker, points)
        else:
            values = list(itertools.starmap(worker, points))
        logger.info('sweep finished')
        return list(zip(points, values))


def write_sweep(stream, names, rows):
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(list(names) + ['value'])
    for point, value in rows:
        writer.writerow(['{:.12g}'.format(v) for v in point] + ['{:.12g}'.format(value)])


def cmd_sweep(options):
    model = load_model(options.model)
    spec = SweepSpec.parse(options.axis)
    sweeper = Sweeper(options.cause, options.outcome, options.degree, options.variant, options.sign,
                      dict(options.param), options.noise_param)
    rows = sweeper.run(model, spec, MULTI_PROCESSING and not options.serial)
    if options.output and options.output != '-':
        with open(options.output, 'w', newline='', encoding='utf-8') as f:
            write_sweep(f, spec.names, rows)
    else:
        write_sweep(sys.stdout, spec.names, rows)
    return EXIT_OK


def cmd_vector(options):
    model = _load(options, options.outcome)
    grid = variational.degree_grid(options.steps, options.maximum)
    values = variational.pace_vector(model, _query(options), grid)
    for d, value in zip(grid, values):
        print('{:.12g}\t{:.12g}'.format(d, value))
    decreases = variational.monotonicity_report(model, _query(options), grid)
    if decreases:
        print('# decreasing in d at {} grid step(s)'.format(len(decreases)))
    return EXIT_OK


# counterfactual


def cmd_counterfactual(options):
    model = _load(options)
    evidence = counterfactual.Evidence(counterfactual.parse_assignment(options.evidence),
                                       counterfactual.parse_assignment(options.context or ''))
    intervention = counterfactual.parse_assignment(options.do or '')
    dist = counterfactual.counterfactual_query(model, evidence, intervention, options.target)
    for (value,), p in dist.items():
        print('P({}={}) = {:.12g}'.format(options.target, format_number(value), p))
    return EXIT_OK


# baselines


def cmd_baselines(options):
    model = _load(options)
    joint = build_joint(model)
    cause, outcome = options.cause, options.outcome
    support = model.support(cause)
    x0 = options.x0 if options.x0 is not None else support[0]
    x1 = options.x1 if options.x1 is not None else support[-1]
    others = [p for p in model.parents(outcome) if p != cause]
    control = name_list(options.control) if options.control is not None else others

    rows = [
        ('ACE({} -> {})'.format(cause, outcome), baselines.ace(model, cause, x0, x1, outcome)),
        ('ACDE({} -> {} | {})'.format(cause, outcome, ', '.join(control)),
         baselines.acde(model, cause, x0, x1, outcome, control)),
    ]
    if options.mediators:
        mediators = name_list(options.mediators)
        rows.append(('ANDE({} -> {} via {})'.format(cause, outcome, ', '.join(mediators)),
                     baselines.ande(model, cause, x0, x1, outcome, mediators)))
    if cause in model.parents(outcome):
        rows.append(('Janzing({} -> {})'.format(cause, outcome),
                     baselines.janzing_strength(model, [(cause, outcome)], joint)))
        rows.append(('MI({}; {})'.format(cause, outcome), baselines.mi_strength(model, cause, outcome, joint)))
        rows.append(('CMI({}; {} | {})'.format(cause, outcome, ', '.join(others)),
                     baselines.cmi_strength(model, cause, outcome, joint)))
    if options.covariates is not None:
        covariates = name_list(options.covariates)
        rows.append(('IPWE({} | do {}={}; {})'.format(outcome, cause, format_number(x1), ', '.join(covariates)),
                     baselines.ipwe_population(model, cause, x1, outcome, covariates, joint)))

    width = max(len(label) for label, _ in rows) + 2
    for label, value in rows:
        print('{:<{}}{:.12g}'.format(label, width, value))
    return EXIT_OK


# estimate


def cmd_estimate(options):
    supports = None
    if options.model:
        model = load_model(options.model)
        supports = {v.name: v.support for v in model.variables}
    dataset = estimation.Dataset.from_csv(options.data, supports)
    given = name_list(options.given) if options.given else []

    if options.natural:
        value = estimation.natural_availability_estimate(dataset, options.cause, given, options.degree,
                                                         options.variant, options.sign)
        label = 'natural availability of {}'.format(options.cause)
    elif not options.outcome:
        raise QueryError('--outcome is required')
    elif options.covariate:
        if options.c0 is None:
            raise QueryError('--covariate needs --c0')
        value = estimation.covariate_weighted_effect(dataset, options.cause, options.outcome, given,
                                                     options.covariate, options.c0, options.degree,
                                                     options.variant, options.sign)
        label = _query(options).describe()
    else:
        value = estimation.identifiable_effect(dataset, options.cause, options.outcome, given, options.degree,
                                               options.variant, options.sign)
        label = _query(options).describe()
    print('{} estimate = {:.12g} ({} records)'.format(label, value, len(dataset)))
    return EXIT_OK


# check


def run_check(model, query, degrees=CHECK_DEGREES):
    """
    Largest disagreement between each fast path and its oracle: chain DP
    against enumeration, direct sums against the matrix forms.
    """
    joint = build_joint(model)
    n = len(model.support(query.cause))
    deviation = 0.0
    for entry in variational.effect(model, query, joint).breakdown:
        for d, sign in itertools.product(degrees, variational.SIGNS):
            q = variational.EffectQuery(query.cause, query.outcome, d, 'pace', sign)
            fast, _ = variational.piv(model, q, entry.z, joint)
            slow, _ = variational.brute_force_piv(model, q, entry.z, joint)
            deviation = max(deviation, abs(fast - slow))
            if n >= 2:
                full = Partition(tuple(range(n)))
                direct = variational.piev(model, q, entry.z, full, joint)
                matrix = variational.matrix_form_piev(model, q, entry.z, full, joint)
                deviation = max(deviation, abs(direct - matrix))
            direct = variational.apiv(model, q, entry.z, joint)
            matrix = variational.matrix_form_apiv(model, q, entry.z, joint)
            deviation = max(deviation, abs(direct - matrix))
    return deviation


def cmd_check(options):
    model = _load(options, options.outcome)
    deviation = run_check(model, _query(options))
    if deviation > CHECK_TOLERANCE:
        raise OracleMismatch('max deviation {:.3g} above {:g}'.format(deviation, CHECK_TOLERANCE))
    if deviation < 1e-12:
        print('OK, max deviation < 1e-12')
    else:
        print('OK, max deviation {:.3g}'.format(deviation))
    return EXIT_OK


# model utilities


def cmd_validate(options):
    model = load_model(options.model)
    if options.param:
        model = bind(model, dict(options.param))
    diagnostics = validate(model)
    for line in diagnostics:
        print(line)
    if diagnostics:
        return EXIT_SEMANTIC
    print('OK, {} variables, {} states'.format(len(model.variables), model.state_space_size()))
    return EXIT_OK


def _emit_model(options, model):
    text = serialize_model(model)
    if options.output and options.output != '-':
        with open(options.output, 'w', encoding='utf-8') as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_eliminate(options):
    model = load_model(options.model)
    _emit_model(options, variational.eliminate_mediator(model, options.mediator))
    return EXIT_OK


def cmd_noise(options):
    model = load_model(options.model)
    if options.param:
        model = bind(model, dict(options.param))
    _emit_model(options, variational.cpt_to_noise(model, options.node, options.noise_name, options.noise_param))
    return EXIT_OK


def cmd_sample(options):
    model = _load(options)
    dataset = estimation.sample_dataset(model, options.n, options.seed)
    if options.output and options.output != '-':
        dataset.to_csv(options.output)
    else:
        buffer = io.StringIO()
        dataset.frame.to_csv(buffer, index=False, float_format='%.12g')
        sys.stdout.write(buffer.getvalue())
    return EXIT_OK


# argument parsing


def _add_query(parser, outcome_required=True):
    parser.add_argument('--cause', '-x', required=True)
    parser.add_argument('--outcome', '-y', required=outcome_required)
    parser.add_argument('--degree', '-d', type=number, default=1.0, help='d >= 0, fractions allowed (1/3)')
    parser.add_argument('--variant', choices=variational.VARIANTS, default='pace')
    parser.add_argument('--sign', choices=variational.SIGNS, default='abs')


def _add_params(parser):
    parser.add_argument('--param', '-p', type=binding, action='append', default=[], metavar='NAME=VALUE')


def build_parser():
    parser = argparse.ArgumentParser(prog='script-vce.py', description='Variational direct causal effects')
    parser.add_argument('-v', '--verbose', action='count', default=0)
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('eval', help='evaluate one effect')
    p.add_argument('model')
    _add_query(p)
    _add_params(p)
    p.add_argument('--noise-param', default=None, help='free parameter for certain rows of a table outcome')
    p.add_argument('--restrict', default=None, help='comma separated subset of the cause support')
    p.add_argument('--format', choices=('table', 'json'), default='table')
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('sweep', help='evaluate over a grid of parameters and degrees')
    p.add_argument('model')
    _add_query(p)
    _add_params(p)
    p.add_argument('--noise-param', default=None)
    p.add_argument('--axis', action='append', required=True, metavar='NAME=START:STOP:STEP')
    p.add_argument('--output', '-o', default='-')
    p.add_argument('--serial', action='store_true', help='do not use a worker pool')
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser('vector', help='effect over the degree grid i*M/N')
    p.add_argument('model')
    _add_query(p)
    _add_params(p)
    p.add_argument('--noise-param', default=None)
    p.add_argument('--steps', type=int, default=10)
    p.add_argument('--maximum', type=number, default=1.0)
    p.set_defaults(handler=cmd_vector)

    p = sub.add_parser('counterfactual', help='abduction, action, prediction')
    p.add_argument('model')
    _add_params(p)
    p.add_argument('--evidence', required=True, metavar='A=a,B=b')
    p.add_argument('--context', default=None, help='intervention active while the evidence was observed')
    p.add_argument('--do', default=None, metavar='X=x')
    p.add_argument('--target', required=True)
    p.set_defaults(handler=cmd_counterfactual)

    p = sub.add_parser('baselines', help='ACE, ACDE, ANDE, Janzing, MI and CMI')
    p.add_argument('model')
    p.add_argument('--cause', '-x', required=True)
    p.add_argument('--outcome', '-y', required=True)
    _add_params(p)
    p.add_argument('--x0', type=number, default=None)
    p.add_argument('--x1', type=number, default=None)
    p.add_argument('--control', default=None, help='controlled variables, default: other parents of the outcome')
    p.add_argument('--mediators', default=None)
    p.add_argument('--covariates', default=None, help='adjustment set for the population IPWE')
    p.set_defaults(handler=cmd_baselines)

    p = sub.add_parser('estimate', help='plug-in estimate from a CSV dataset')
    p.add_argument('data')
    _add_query(p, outcome_required=False)
    p.add_argument('--given', '-z', default=None)
    p.add_argument('--model', default=None, help='model file declaring the supports')
    p.add_argument('--covariate', default=None)
    p.add_argument('--c0', type=number, default=None)
    p.add_argument('--natural', action='store_true', help='natural availability of the cause')
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser('check', help='compare fast paths with their oracles')
    p.add_argument('model')
    _add_query(p)
    _add_params(p)
    p.add_argument('--noise-param', default=None)
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser('validate', help='print model diagnostics')
    p.add_argument('model')
    _add_params(p)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser('sample', help='draw a CSV dataset from a model')
    p.add_argument('model')
    _add_params(p)
    p.add_argument('-n', type=int, default=1000)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--output', '-o', default='-')
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser('eliminate', help='substitute a deterministic mediator into its children')
    p.add_argument('model')
    p.add_argument('--mediator', '-m', required=True)
    p.add_argument('--output', '-o', default='-')
    p.set_defaults(handler=cmd_eliminate)

    p = sub.add_parser('noise', help='rewrite a binary table node with a noise variable')
    p.add_argument('model')
    p.add_argument('--node', required=True)
    _add_params(p)
    p.add_argument('--noise-name', default=None)
    p.add_argument('--noise-param', default=None)
    p.add_argument('--output', '-o', default='-')
    p.set_defaults(handler=cmd_noise)

    return parser


def main(argv):
    parser = build_parser()
    try:
        options = parser.parse_args(argv[1:])
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_SEMANTIC

    level = logging.WARNING if options.verbose == 0 else (logging.INFO if options.verbose == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr)

    try:
        return options.handler(options)
    except (VceError, OSError) as e:
        print('error: {}'.format(e), file=sys.stderr)
        return exit_code(e)
