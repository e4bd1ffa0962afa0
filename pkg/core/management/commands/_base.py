"""
Shared plumbing for the report-producing commands.
"""

from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.config.schema import load_config
from core.exceptions import ConfigInvalid, NetabsError
from core.reports.rendering import render_report, write_report
from core.services import as_payload


class ConfigCommand(BaseCommand):
    """A command that reads a project config and prints a report."""

    report_name = 'report'
    takes_config = True

    def add_arguments(self, parser):
        if self.takes_config:
            parser.add_argument('config', help='Path to the JSON project config')
        parser.add_argument('--tol', type=float, default=None,
                            help=f'Check tolerance (default {settings.NETABS_TOL:g})')
        parser.add_argument('--out', default=None,
                            help='Directory for report files; nothing is written without it')
        parser.add_argument('--format', choices=['text', 'json'], default='text', dest='fmt',
                            help='Report format')

    def load(self, options):
        return load_config(options['config'])

    def out_dir(self, options):
        return Path(options['out']) if options.get('out') else None

    def emit(self, options, template, context, payload):
        """Print the report and write it under --out."""
        fmt = options['fmt']
        content = render_report(template, context, as_payload(payload), fmt)
        self.stdout.write(content)
        path = write_report(content, self.out_dir(options), f"{self.report_name}.{'json' if fmt == 'json' else 'txt'}")
        if path is not None:
            self.stdout.write(f"Report written to {path}")

    def execute_step(self, options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            self.execute_step(options)
        except ConfigInvalid as exc:
            raise CommandError(f"Invalid config: {exc}", returncode=2)
        except NetabsError as exc:
            raise CommandError(f"{type(exc).__name__}: {exc}", returncode=1)
