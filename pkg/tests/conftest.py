from absl import flags


def pytest_configure(config):
  # absltest helpers (e.g. create_tempdir) read flags; mark them parsed under pytest.
  if not flags.FLAGS.is_parsed():
    flags.FLAGS.mark_as_parsed()
