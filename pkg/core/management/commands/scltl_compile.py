from pathlib import Path

from django.core.management.base import CommandError

from core.management.commands._base import ConfigCommand
from core.speclang.automata import to_dot
from core.services import SpecificationService


class Command(ConfigCommand):
    help = 'Compile an scLTL formula into a DFA and print it in DOT format'
    takes_config = False

    def add_arguments(self, parser):
        parser.add_argument('config', nargs='?', default=None,
                            help='Project config whose spec section is compiled')
        parser.add_argument('--formula', default=None, help='Formula text, e.g. "!c U b"')
        parser.add_argument('--props', nargs='+', default=None,
                            help='Atomic propositions of the powerset alphabet')
        parser.add_argument('--absorb', action='store_true',
                            help='Add the absorbing location for the fresh letter')
        parser.add_argument('--out', default=None, help='DOT file to write')

    def execute_step(self, options):
        if options['formula']:
            dfa = SpecificationService.compile(options['formula'], props=options['props'], absorb=options['absorb'])
        elif options['config']:
            config = self.load(options)
            if config.spec is None:
                raise CommandError("Config has no 'spec' section", returncode=2)
            dfa = SpecificationService.compile(config.spec.formula, alphabet=config.spec.alphabet(),
                                               absorb=options['absorb'])
        else:
            raise CommandError('Give --formula or a config path', returncode=2)

        dot = to_dot(dfa)
        if options['out']:
            path = Path(options['out'])
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(dot)
            self.stdout.write(self.style.SUCCESS(f"Wrote {dfa.size} locations to {path}"))
        else:
            self.stdout.write(dot)
