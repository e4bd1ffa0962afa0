from core.management.commands._base import ConfigCommand
from core.services import BoundService, CertificationService, CompositionService, SimulationService


class Command(ConfigCommand):
    help = 'Simulate the paired concrete/abstract closed loop and compare with the bounds'
    report_name = 'simulate'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--trials', type=int, default=None, help='Number of trials')
        parser.add_argument('--seed', type=int, default=None, help='64-bit seed')
        parser.add_argument('--workers', type=int, default=None, help='Thread-pool width')

    def execute_step(self, options):
        config = self.load(options)
        verification = CertificationService.verify(config, options['tol'])
        composition = CompositionService.compose(config, verification, options['tol'])
        bounds = BoundService.tables(config, composition) if config.bound else None
        batch = SimulationService.run(config, composition.pair, options['trials'], options['seed'],
                                      options['workers'])
        epsilons = config.mc.epsilons if config.mc and config.mc.epsilons else (config.bound.epsilons if config.bound else ())
        outcome = SimulationService.assess(batch, epsilons, bounds)
        SimulationService.export(outcome, self.out_dir(options))
        self.emit(options, 'simulate.txt', {'name': config.name, 'simulation': outcome}, outcome)
