from core.composition.network import AlphaMode
from core.management.commands._base import ConfigCommand
from core.services import BoundService, CertificationService, CompositionService


class Command(ConfigCommand):
    help = 'Tabulate the probability that concrete and abstract outputs drift apart'
    report_name = 'bound'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--eps', type=float, nargs='+', default=None, help='Output distances')
        parser.add_argument('--horizon', type=int, nargs='+', default=None, help='Time horizons')
        parser.add_argument('--nuhat-sup', type=float, default=None, help='Bound on abstract inputs')
        parser.add_argument('--alpha-mode', choices=[m.value for m in AlphaMode], default=AlphaMode.QUADRATIC.value,
                            help='Composed alpha used as the primary bound')

    def execute_step(self, options):
        config = self.load(options)
        verification = CertificationService.verify(config, options['tol'])
        composition = CompositionService.compose(config, verification, options['tol'])
        bounds = BoundService.tables(config, composition, options['eps'], options['horizon'],
                                     options['nuhat_sup'], AlphaMode(options['alpha_mode']))
        order = [bounds.primary] + [m for m in bounds.tables if m != bounds.primary]
        tables = [{'mode': mode.value, 'rows': bounds.tables[mode]} for mode in order]
        self.emit(options, 'bound.txt', {'name': config.name, 'bounds': bounds, 'tables': tables}, bounds)
