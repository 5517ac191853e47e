from uncq import create_cli

create_cli()(prog_name='uncq')
