from setuptools import setup

# Really only required so setup.cfg can pick up __version__
setup(
    name='spherebraid'
)
