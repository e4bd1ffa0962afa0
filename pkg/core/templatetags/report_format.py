import math
import numbers

from django import template

register = template.Library()

SIGNIFICANT_DIGITS = 12


@register.filter
def sig(value, digits=SIGNIFICANT_DIGITS):
    """Format a number with a fixed count of significant digits."""
    if value is None or value == '':
        return '-'
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        return value
    value = float(value)
    if math.isnan(value):
        return 'nan'
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return f"{value:.{int(digits)}g}"


@register.filter
def verdict(passed):
    return 'PASS' if passed else 'FAIL'


@register.filter
def matrix_rows(value):
    """Rows of a matrix as space-separated 12-digit numbers."""
    return [' '.join(sig(v) for v in row) for row in value]
