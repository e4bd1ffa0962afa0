import json
from pathlib import Path

from core.config.casestudy import casestudy_config
from core.config.schema import dump_config
from core.management.commands._base import ConfigCommand
from core.services import CaseStudyService


class Command(ConfigCommand):
    help = 'Run the three-room case study end to end: verify, compose, bound, simulate, transfer'
    report_name = 'casestudy'
    takes_config = False

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--block-size', type=int, default=74, help='State dimension of each subsystem')
        parser.add_argument('--trials', type=int, default=None, help='Number of trials')
        parser.add_argument('--seed', type=int, default=None, help='64-bit seed')
        parser.add_argument('--workers', type=int, default=None, help='Thread-pool width')
        parser.add_argument('--zero-noise', action='store_true', help='Drop the concrete noise')
        parser.add_argument('--write-config', default=None,
                            help='Write the generated config document to this path and stop')

    def execute_step(self, options):
        if options['write_config']:
            path = Path(options['write_config'])
            path.parent.mkdir(parents=True, exist_ok=True)
            overrides = {key: options[key] for key in ('trials', 'seed') if options[key] is not None}
            document = casestudy_config(options['block_size'], options['zero_noise'], **overrides)
            path.write_text(json.dumps(document, indent=2))
            self.stdout.write(self.style.SUCCESS(f"Wrote config to {path}"))
            return

        config = CaseStudyService.config(options['block_size'], options['zero_noise'], options['trials'],
                                         options['seed'])
        out_dir = self.out_dir(options)
        self.stdout.write(f"Running case study {config.name}...")
        run = CaseStudyService.run(config, options['tol'], options['workers'], out_dir)
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / 'config.json').write_text(json.dumps(dump_config(config)))
        report = run.composition.report
        context = {
            'name': run.name,
            'verification': run.verification,
            'report': report,
            'modes': [report.quadratic, report.generic],
            'bounds': run.bounds,
            'tables': [{'mode': mode.value, 'rows': rows} for mode, rows in run.bounds.tables.items()],
            'simulation': run.simulation,
            'transfer': run.transfer,
        }
        self.emit(options, 'casestudy.txt', context, run)
        self.stdout.write(self.style.SUCCESS(
            f"Concrete specification satisfied with probability >= {run.transfer.lower:.12g}"
        ))
