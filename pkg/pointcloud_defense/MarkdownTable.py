"""
This module exposes MarkdownTable, which turns report rows into Markdown
for notebooks (rendered through IPython) and terminals (printed as is).

Example:
        text = MarkdownTable.render([['sor', '86.5%']], ['defense', 'accuracy'])
"""


class MarkdownTable:
    @staticmethod
    def cell(value):
        """Formats one cell; floats keep 4 decimals and pipes are escaped"""
        if value is None:
            return '-'
        if isinstance(value, float):
            value = '{:.4f}'.format(value)
        return str(value).replace('|', '<code>&#124;</code>')

    @staticmethod
    def render(data, headers):
        if len(headers) == 0:
            return ''
        lines = ['| ' + ' | '.join(MarkdownTable.cell(h) for h in headers) + ' |',
                 '| ' + ' | '.join('---' for _ in headers) + ' |']
        for row in data:
            lines.append('| ' + ' | '.join(MarkdownTable.cell(col) for col in row) + ' |')
        return '\n'.join(lines)
