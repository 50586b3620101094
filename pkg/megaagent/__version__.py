__version__ = "0.1.0"
__title__ = "megaagent"
__description__ = "Hierarchical multi-agent runtime driven by a single meta-prompt"
__license__ = "Apache License 2.0"
__author__ = "MegaAgent developers"
__author_email__ = ""
