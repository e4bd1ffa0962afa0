from django.core.management.base import CommandError

from core.management.commands._base import ConfigCommand
from core.services import CertificationService


class Command(ConfigCommand):
    help = 'Verify the storage certificate of every subsystem in a project config'
    report_name = 'verify'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--eig-method', choices=['lapack', 'jacobi'], default=None,
                            help='Eigenvalue backend for definiteness checks')

    def execute_step(self, options):
        config = self.load(options)
        outcome = CertificationService.verify(config, options['tol'], options['eig_method'])
        self.emit(options, 'verify.txt', {'name': config.name, 'verification': outcome}, outcome)
        if not outcome.passed:
            self.stdout.write(self.style.ERROR('Failed: ' + '; '.join(outcome.failures())))
            raise CommandError(f"Certificate checks failed: {'; '.join(outcome.failures())}", returncode=1)
        self.stdout.write(self.style.SUCCESS(f"All {len(outcome.subsystems)} certificates verified"))
