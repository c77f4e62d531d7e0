import json

import pandas as pd
import pytest

from cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, ConfigError, load_config, main, parse_config, \
    subcommand_dispatch
from analysis import REFERENCE_EFFICIENCY_TABLE
from scenarios import PRESETS, HighAngularSpread, Table2

SMALL_SCENARIO = """
[scenario]
name = "small"
trials = 2
simulated_subcarriers = 4

[rs]
count_h = 4
count_v = 4

[ofdm]
frame_symbols = 10
"""


def _write(tmp_path, text: str, name: str = 'scenario.toml'):
    path = tmp_path / name
    path.write_text(text, encoding='utf8')
    return path


class TestParseConfig:

    @pytest.mark.parametrize('name', list(PRESETS))
    def test_presets(self, name):
        cfg, defaults = load_config(PRESETS[name].file_name)
        assert cfg.name == name
        assert cfg.channel_model == PRESETS[name].channel_model
        assert (cfg.b, cfg.m) == (4, 64)
        assert cfg.budget.noise_power == pytest.approx(10 ** -9.4)
        assert defaults == []

    def test_geometric_profiles_point_along_the_links(self):
        cfg = parse_config(HighAngularSpread.file_name)
        assert cfg.profile_bs_rs.asd == 30.0
        # RS at (3, 0, 3) transmits towards the BS at the origin
        assert cfg.profile_bs_rs.los_azimuth_departure == pytest.approx(180.0)
        assert cfg.profile_bs_rs.los_azimuth_arrival == pytest.approx(0.0)

    def test_defaults_are_reported(self, tmp_path):
        cfg, defaults = load_config(_write(tmp_path, SMALL_SCENARIO))
        assert cfg.trials == 2 and cfg.m == 16
        assert 'link.tx_power_dbw' in defaults
        assert 'scenario.seed' in defaults

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(_write(tmp_path, '[link]\nl_gamma_db = 3\n'))
        cfg = parse_config(_write(tmp_path, '[link]\nl_gamma_db = 3\n'), strict=False)
        assert cfg.name == 'scenario'

    def test_invalid_values(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(_write(tmp_path, '[scenario]\nscheme = "qam"\n'))
        with pytest.raises(ConfigError):
            parse_config(_write(tmp_path, '[rs]\ncount_h = 0\n'))
        with pytest.raises(ConfigError):
            parse_config(_write(tmp_path, '[ofdm]\nsubcarriers = 64\ncp_length = 64\n'))
        with pytest.raises(ConfigError):
            parse_config(tmp_path / 'missing.toml')


class TestSubcommands:

    def test_unknown_subcommand(self):
        assert main(['train']) == EXIT_USAGE
        assert main([]) == EXIT_USAGE
        assert main(['sinr', '--no-such-flag']) == EXIT_USAGE

    def test_help_exits_cleanly(self):
        assert subcommand_dispatch(['validate', '--help']) == EXIT_OK
        assert subcommand_dispatch(('--help',)) == EXIT_USAGE

    def test_configuration_error(self, tmp_path):
        path = _write(tmp_path, '[bogus]\nvalue = 1\n')
        assert main(['sinr', '--config', str(path), '--quiet']) == EXIT_VALIDATION

    def test_efficiency_table(self, tmp_path):
        out = tmp_path / 'efficiency.csv'
        assert main(['efficiency', '--calibration', '0.5', '--out', str(out), '--quiet']) == EXIT_OK
        table = pd.read_csv(out)
        assert table.shape == (5, 6)
        for _, row in table.iterrows():
            assert row.drop('M').tolist() == pytest.approx(REFERENCE_EFFICIENCY_TABLE[int(row['M'])], abs=0.002)
        manifest = json.loads(out.with_suffix('.json').read_text())
        assert manifest['subcommand'] == 'efficiency'
        assert manifest['config_path'] == str(Table2.file_name)

    def test_high_power_sinr(self, tmp_path, capsys):
        out = tmp_path / 'analysis.csv'
        code = main(['analysis', '--eq', 'sinr', '--B', '4', '--M', '64', '--highpower', '--out', str(out)])
        assert code == EXIT_OK
        assert 'sinr_high_power = 3.7101' in capsys.readouterr().out

    def test_complexity(self, tmp_path):
        out = tmp_path / 'complexity.csv'
        assert main(['analysis', '--eq', 'complexity', '--B', '4', '--M', '64', '--K', '1024', '--out', str(out),
                     '--quiet']) == EXIT_OK
        values = dict(pd.read_csv(out)[['quantity', 'value']].itertuples(index=False))
        assert values['cds_products'] == 4 * 1024
        assert values['ncds_products'] == 5 * 1023
        assert values['cds_opt_order'] == 5 * (64 + 64) * 1024

    def test_sinr_sweep(self, tmp_path):
        out = tmp_path / 'sinr.csv'
        config = _write(tmp_path, SMALL_SCENARIO)
        assert main(['sinr', '--config', str(config), '--values', '0,10', '--out', str(out), '--quiet']) == EXIT_OK
        frame = pd.read_csv(out)
        assert sorted(frame['metric_name'].unique()) == ['sinr_closed_form', 'sinr_ncds']
        assert len(frame) == 4
        assert frame['config_digest'].nunique() == 1

    def test_seed_changes_the_digest(self, tmp_path):
        config = _write(tmp_path, SMALL_SCENARIO)
        digests = []
        for seed in ('1', '2'):
            out = tmp_path / 'sep-{}.csv'.format(seed)
            assert main(['sep', '--config', str(config), '--values', '0', '--schemes', 'ncds', '--seed', seed,
                         '--out', str(out), '--quiet']) == EXIT_OK
            digests.append(pd.read_csv(out)['config_digest'][0])
        assert digests[0] != digests[1]

    def test_thread_count_does_not_change_the_csv(self, tmp_path):
        config = _write(tmp_path, SMALL_SCENARIO.replace('trials = 2', 'trials = 6'))
        outputs = []
        for threads in ('1', '4'):
            out = tmp_path / 'sep-{}.csv'.format(threads)
            assert main(['sep', '--config', str(config), '--values', '0,10', '--threads', threads, '--out', str(out),
                         '--quiet']) == EXIT_OK
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_infeasible_only(self, tmp_path):
        config = _write(tmp_path, SMALL_SCENARIO.replace('count_h = 4\ncount_v = 4', 'count_h = 16\ncount_v = 16')
                        + '\n[ue]\nspeed_kmh = 10.0\n\n[cds]\ncalibration = 0.5\n')
        out = tmp_path / 'sep.csv'
        code = main(['sep', '--config', str(config), '--values', '0', '--schemes', 'cds', '--out', str(out),
                     '--quiet'])
        assert code == EXIT_INFEASIBLE
        frame = pd.read_csv(out, keep_default_na=False)
        assert frame.loc[0, 'status'] == 'infeasible'
        assert frame.loc[0, 'value'] == 'infeasible'

    def test_validate(self, capsys):
        assert main(['validate']) == EXIT_OK
        assert 'FAIL' not in capsys.readouterr().out

    def test_manifest_matches_every_row(self, tmp_path):
        config = _write(tmp_path, SMALL_SCENARIO.replace('trials = 2\n', ''))
        out = tmp_path / 'sep.csv'
        assert main(['sep', '--config', str(config), '--values', '0', '--out', str(out), '--quiet']) == EXIT_OK
        frame = pd.read_csv(out, keep_default_na=False)
        manifest = json.loads(out.with_suffix('.json').read_text())
        assert sorted(frame['scheme']) == ['cds', 'ncds']
        assert set(frame['config_digest']) == {manifest['config_digest']}
        assert 'scenario.trials' in manifest['defaults_applied']
        assert manifest['config']['trials'] == 100
