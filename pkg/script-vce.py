#!/usr/bin/env python3

import sys

import vcecli

"""
This script evaluates variational direct causal effects of .sem models

Usage:
 script-vce.py eval MODEL --cause X --outcome Y [--degree D] [--variant pace|peace|space|apace]
               [--sign abs|positive|negative] [--param NAME=VALUE] [--format table|json]
 script-vce.py sweep MODEL --cause X --outcome Y --axis p=0:1:0.05 --axis d=0:1:0.1 [-o out.csv] [--serial]
 script-vce.py vector MODEL --cause X --outcome Y [--steps N] [--maximum M]
 script-vce.py counterfactual MODEL --evidence W=1 [--context R=0] --do R=1 --target W
 script-vce.py baselines MODEL --cause X --outcome Y [--control Z] [--mediators M] [--covariates C]
 script-vce.py estimate DATA.csv --cause X --outcome Y [--given Z] [--covariate C --c0 c]
 script-vce.py check MODEL --cause X --outcome Y
 script-vce.py validate|sample|eliminate|noise MODEL ...
"""


def main(args):
    return vcecli.main(args)


if __name__ == '__main__':
    sys.exit(main(sys.argv))
