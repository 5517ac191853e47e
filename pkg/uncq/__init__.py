# Initialize the command line application
import click

from uncq.config import ENV_FILE, load_settings
from uncq.errors import ConfigError
from uncq.logconfig import configure_logging
from uncq.runner import RunFailed

# Import the commands
from uncq.cmd_causal import causal
from uncq.cmd_classify import classify
from uncq.cmd_crossing import crossing
from uncq.cmd_ood_eval import ood_eval
from uncq.cmd_pi_eval import pi_eval
from uncq.cmd_synth import synth
from uncq.cmd_theorem import verify_theorem1

__version__ = '0.3.0'


def create_cli(env_file=ENV_FILE):
    """
    Application factory for the command line harness.

    Settings are loaded from ``env_file`` and the process environment when the
    group runs, so every invocation sees the current UNCQ_* variables.
    """

    @click.group()
    @click.version_option(__version__, prog_name='uncq')
    @click.pass_context
    def cli(ctx):
        """Quantile regression intervals and orthonormal-certificate OOD detection."""
        try:
            settings = load_settings(env_file)
        except ConfigError as e:
            raise RunFailed(str(e), e.exit_code)
        configure_logging(settings)
        ctx.obj = settings

    # Register commands
    cli.add_command(pi_eval)
    cli.add_command(ood_eval)
    cli.add_command(verify_theorem1)
    cli.add_command(causal)
    cli.add_command(synth)
    cli.add_command(classify)
    cli.add_command(crossing)

    return cli
