"""
rbvrisk: mortality risk analysis of routine blood values.

Feature selection, correlation analysis, SMOTE balancing, histogram gradient
boosting with baseline classifiers, and exhaustive threshold rules for
survived / non-survived classification of COVID-19 patients.
"""

__version__ = "1.0.0"
