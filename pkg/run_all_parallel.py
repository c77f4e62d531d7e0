import os
import subprocess
import argparse

from scenarios import PRESETS


def run_all_in_parallel(coms, files):
    if not os.path.exists('logs'):
        os.makedirs('logs')
    procs = [subprocess.Popen(coms[i], shell=True, stdout=open(files[i], "w")) for i in range(len(coms))]
    for p in procs:
        p.wait()
    return [p.returncode for p in procs]


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description="Run all in parallel options",
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("-e", "--experiment", type=str, default='sep', help="sinr for all SINR sweeps, "
                                                                            "sep for all SEP comparisons, "
                                                                            "efficiency for the efficiency table")
    parser.add_argument("-t", "--threads", type=int, default=1, help="worker threads of every process")
    options = parser.parse_args()

    experiment = options.experiment.lower()
    if experiment in ['sinr', 'sep']:
        scenarios = list(PRESETS)
        commands = ["python -m cli {} --config {} --threads {}".format(experiment, PRESETS[s].file_name,
                                                                        options.threads) for s in scenarios]
        logfiles = ["logs/{} of s={}.txt".format(experiment, s) for s in scenarios]
        run_all_in_parallel(commands, logfiles)
    elif experiment in ['efficiency', 'eff']:
        calibrations = [0.5, 1.0]
        commands = ["python -m cli efficiency --calibration {} --out results/efficiency/calibration={}.csv"
                    .format(c, c) for c in calibrations]
        logfiles = ["logs/efficiency of c={}.txt".format(c) for c in calibrations]
        run_all_in_parallel(commands, logfiles)
    else:
        raise ValueError('Option "{}" is not a valid option!'.format(options.experiment))
