# Run the command line harness created by the factory method
from uncq import create_cli

cli = create_cli()

if __name__ == '__main__':
    """
    Entry point, e.g. ``python run.py pi-eval --dataset concrete --seeds 5``.
    Exit codes: 0 success, 2 usage or input error, 3 numeric failure.
    """
    cli(prog_name='uncq')
