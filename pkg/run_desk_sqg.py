import asyncio
import logging
import os

import sqglab
from sqglab import config, diagnostics, runner


FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
logging.basicConfig(level=logging.INFO, format=FORMAT)


# Integrate the shipped desk config and check the level-set machinery on the result
cfg = config.load_config(os.path.join(os.path.dirname(__file__), 'configs', 'desk_sqg.cfg'))
traj = sqglab.run(cfg.solver_config())
traj.save('desk-sqg')

jobs = diagnostics.build_jobs(traj, ['level_set', 'uk', 'linf_decay'], cfg.section('diagnostics'))
loop = asyncio.new_event_loop()
report = loop.run_until_complete(runner.collect_report(jobs, loop=loop, threads=4))
loop.close()
for result in report:
    print('{:<24} {:<12} {:.3e}'.format(result.name, result.status.name.lower(), result.residual))
