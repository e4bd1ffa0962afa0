from core.management.commands._base import ConfigCommand
from core.services import CertificationService, CompositionService


class Command(ConfigCommand):
    help = 'Check the network composition conditions and compose the simulation function'
    report_name = 'compose'

    def execute_step(self, options):
        config = self.load(options)
        verification = CertificationService.verify(config, options['tol'])
        outcome = CompositionService.compose(config, verification, options['tol'])
        report = outcome.report
        context = {'name': config.name, 'report': report, 'modes': [report.quadratic, report.generic]}
        self.emit(options, 'compose.txt', context, outcome)
        self.stdout.write(self.style.SUCCESS('Composition conditions hold'))
