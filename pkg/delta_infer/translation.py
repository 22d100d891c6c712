"""The translation global for delta_infer is setup here."""
# pylint: disable=invalid-name
import gettext
import os

locale = os.path.dirname(__file__) + ('/locales')
gettext.bindtextdomain('delta_infer', locale)
gettext.textdomain('delta_infer')
EN = gettext.translation('delta_infer', locale, ['en'], fallback=True)
gettext = EN.gettext
_ = gettext
