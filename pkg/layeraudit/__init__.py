"""LayerAudit continuous compliance module.

This module evaluates declarative compliance rules against multi-layer business event logs and
writes the calculated violation and follow-up layers back as ordinary event logs.

The exported modules fall into several categories:

Modules that model and compute the compliance loop:
    * event_model - events, traces, logs and flat-file ingestion
    * crl - the compliance rule registry language
    * engine - batch and incremental rule evaluation
    * layers - multi-layer log composition and timelines
    * analytics - directly-follows models, lead times and period summaries
    * network - the rule/case violation network
    * dispatch - follow-up actions

Modules that provide supporting utilities:
    * cli - the command line driver
    * commander - argparse
    * configmgr - managing run configurations
    * fileutil - working with output files
    * lang - Python language utilities
    * netutil - webhook delivery
    * reporter - creating static reports
    * time - working with instants and durations
"""

__all__ = ('__title__', '__summary__', '__uri__',
           '__version__', '__author__', '__email__',
           '__license__', '__copyright__')

__title__ = 'LayerAudit'
__summary__ = 'Continuous compliance with calculated event log layers'
__uri__ = 'https://github.com/tardis4500/layeraudit/'

__version__ = '1.0.0rc0'

__author__ = 'Jeffery G. Smith'
__email__ = 'web@pobox.com'

__license__ = 'MIT'
__copyright__ = 'Copyright (c) 2024 Jeffery G. Smith'

# cSpell:ignore configmgr fileutil netutil layeraudit
